"""
Batch Processor - Run parameter sweeps over a base configuration with a thread pool
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path
from typing import Callable, Dict, List, Optional

from src.config import RunConfig, read_yaml
from src.errors import ConfigError, HomogenizationError

logger = logging.getLogger(__name__)


def expand_grid(grid: Dict[str, List]) -> List[Dict]:
    """Cartesian product of the listed values, in key order"""
    if not grid:
        return [{}]
    keys = list(grid)
    for key in keys:
        if not isinstance(grid[key], list) or not grid[key]:
            raise ConfigError([f"sweep grid entry '{key}' must be a non-empty list"])
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]


def point_name(overrides: Dict) -> str:
    """Directory name of one sweep point, e.g. 'architecture=391_epsilon=0.05'"""
    if not overrides:
        return "base"
    parts = []
    for key, value in overrides.items():
        text = "-".join(str(v) for v in value) if isinstance(value, list) else str(value)
        parts.append(f"{key}={text}")
    return "_".join(parts).replace("/", "-")


def load_sweep(path) -> Dict:
    """
    Sweep file layout:
        base: {flat run config}        (or base_config: path to a run config file)
        grid: {key: [values, ...]}     cartesian product of overrides
        points: [{overrides}, ...]     explicit points, appended to the grid product
        max_workers: 1
    """
    data = read_yaml(path)
    problems = [f"unknown sweep key '{k}'" for k in data if k not in ("base", "base_config", "grid", "points", "max_workers")]
    if problems:
        raise ConfigError(problems)
    base = dict(data.get("base") or {})
    if data.get("base_config"):
        base = {**read_yaml(Path(path).parent / data["base_config"]), **base}
    points = expand_grid(data.get("grid") or {}) if data.get("grid") else []
    points.extend(dict(p) for p in (data.get("points") or []))
    if not points:
        points = [{}]
    return {"base": base, "points": points, "max_workers": int(data.get("max_workers", 1))}


class BatchProcessor:
    """Run many configurations, one output directory per point"""

    def __init__(self, runner: Callable[[RunConfig], Dict], max_workers: int = 1):
        self.runner = runner
        self.max_workers = max(1, int(max_workers))
        self.results: List[Dict] = []

    def process_sweep(
        self,
        base: Dict,
        points: List[Dict],
        out_root,
        progress_callback: Optional[Callable] = None,
    ) -> List[Dict]:
        """
        Validate every point first, then run them concurrently

        Args:
            base: flat run configuration shared by all points
            points: per-point overrides
            out_root: parent directory of the per-point run directories
            progress_callback: called as (completed, total, message)

        Returns:
            One result per point, in input order: name, success, error, record
        """
        out_root = Path(out_root)
        configs = []
        problems = []
        for overrides in points:
            name = point_name(overrides)
            data = {**base, **overrides, "output_dir": str(out_root / name)}
            try:
                configs.append((name, RunConfig.from_dict(data)))
            except ConfigError as e:
                problems.extend(f"{name}: {p}" for p in e.problems)
        if problems:
            raise ConfigError(problems)

        total = len(configs)
        if progress_callback:
            progress_callback(0, total, f"Running {total} sweep points...")

        def run_single(name: str, config: RunConfig, index: int) -> Dict:
            try:
                record = self.runner(config)
                return {"index": index, "name": name, "success": True, "error": "", "record": record}
            except HomogenizationError as e:
                logger.error(f"❌ Sweep point {name} failed: {e}")
                return {"index": index, "name": name, "success": False, "error": str(e), "record": None}
            except Exception as e:
                logger.error(f"❌ Sweep point {name} raised {type(e).__name__}: {e}")
                return {"index": index, "name": name, "success": False,
                        "error": f"{type(e).__name__}: {e}", "record": None}

        results: List[Optional[Dict]] = [None] * total
        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            future_to_index = {
                executor.submit(run_single, name, config, i): i for i, (name, config) in enumerate(configs)
            }
            completed = 0
            for future in as_completed(future_to_index):
                result = future.result()
                results[result["index"]] = result
                completed += 1
                if progress_callback:
                    progress_callback(completed, total, f"Finished {completed}/{total}: {result['name']}")

        self.results = results
        return results

    def get_summary_stats(self) -> Dict:
        total = len(self.results)
        successful = sum(1 for r in self.results if r.get("success"))
        flagged = sum(1 for r in self.results if r.get("record") and r["record"].get("suspected_failure"))
        return {
            "total": total,
            "successful": successful,
            "failed": total - successful,
            "suspected_failures": flagged,
        }
