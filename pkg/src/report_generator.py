"""
Report Generator - Text tables for bounds, consolidated sweeps and the property checks
"""

from collections import defaultdict
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from src.network import NetworkConfig, param_count

REPORT_COLUMNS = [
    "run", "method", "form", "size", "material", "basis",
    "primal_estimate", "dual_estimate", "upper_bound", "lower_bound", "gap",
    "primal_err_pct", "dual_err_pct", "upper_err_pct", "lower_err_pct",
    "suspected_failure", "best",
]


def _describe_size(method: str, config: Dict) -> str:
    if method == "fem":
        return f"n={config.get('fem_n', '?')}"
    try:
        net = NetworkConfig(config["n_periodic"], config["n_hidden"], config["n_layers"])
    except (KeyError, TypeError, ValueError):
        return "?"
    return str(param_count(net))


def _describe_basis(method: str, config: Dict) -> str:
    if method == "vspinn":
        return f"spectral M={config.get('M')} N={config.get('N')}"
    if method == "vnpinn":
        return f"network N_t={config.get('n_test')}"
    return "-"


class ReportGenerator:
    """Generate text reports from bound reports and run records"""

    def __init__(self, output_dir: str = "runs"):
        self.output_dir = Path(output_dir)

    def generate_bounds_table(self, final: Dict, title: str = "BOUNDS") -> str:
        """
        Table of estimates and bounds with relative errors against the exact value

        Args:
            final: BoundReport.to_dict(exact) output
            title: heading line
        """
        exact = final.get("exact_reference")
        errors = final.get("relative_errors") or {}
        report = []
        report.append("=" * 70)
        report.append(title)
        report.append("=" * 70)
        report.append(f"{'quantity':<20s}{'value':>14s}{'rel. error %':>16s}")
        report.append("-" * 70)
        for key, label in (
            ("primal_estimate", "primal estimate"),
            ("dual_estimate", "dual estimate"),
            ("upper_bound", "upper bound"),
            ("lower_bound", "lower bound"),
        ):
            err = errors.get(key)
            err_text = f"{err:+.3f}" if err is not None else "-"
            report.append(f"{label:<20s}{final[key]:>14.6f}{err_text:>16s}")
        report.append("-" * 70)
        report.append(f"{'gap (p-d)/p':<20s}{final['gap']:>14.6f}")
        if exact is not None:
            report.append(f"{'exact':<20s}{exact:>14.6f}")
        report.append("=" * 70)
        return "\n".join(report)

    @staticmethod
    def summary_rows(records: Sequence[Tuple[str, Dict]]) -> List[Dict]:
        """
        One row per run record, with best-in-group markers

        The best run of each method is the one with the tightest guaranteed interval.
        """
        rows = []
        for name, record in records:
            config = record.get("config", {})
            method = record.get("method", config.get("method", "?"))
            final = record.get("final") or {}
            errors = final.get("relative_errors") or {}
            rows.append({
                "run": name,
                "method": method,
                "form": config.get("form", "both"),
                "size": _describe_size(method, config),
                "material": record.get("metadata", {}).get("training_material", config.get("material", "?")),
                "basis": _describe_basis(method, config),
                "primal_estimate": final.get("primal_estimate"),
                "dual_estimate": final.get("dual_estimate"),
                "upper_bound": final.get("upper_bound"),
                "lower_bound": final.get("lower_bound"),
                "gap": final.get("gap"),
                "primal_err_pct": errors.get("primal_estimate"),
                "dual_err_pct": errors.get("dual_estimate"),
                "upper_err_pct": errors.get("upper_bound"),
                "lower_err_pct": errors.get("lower_bound"),
                "suspected_failure": record.get("suspected_failure"),
                "best": "",
            })

        groups = defaultdict(list)
        for row in rows:
            if row["upper_bound"] is not None and row["lower_bound"] is not None:
                groups[row["method"]].append(row)
        for members in groups.values():
            best = min(members, key=lambda r: r["upper_bound"] - r["lower_bound"])
            best["best"] = "*"
        return rows

    def generate_consolidated_report(self, rows: List[Dict], title: str = "CONSOLIDATED REPORT") -> str:
        def fmt(value, spec):
            return "-" if value is None else format(value, spec)

        report = []
        report.append("=" * 100)
        report.append(title)
        report.append(f"Generated: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
        report.append("=" * 100)
        report.append(
            f"{'run':<22s}{'method':<8s}{'size':<8s}{'material':<20s}"
            f"{'primal%':>9s}{'dual%':>9s}{'upper%':>9s}{'lower%':>9s}{'gap':>8s}"
        )
        report.append("-" * 100)
        for row in rows:
            flag = " ⚠️" if row.get("suspected_failure") else ""
            report.append(
                f"{row['best'] or ' '}{row['run'][:21]:<21s}{row['method']:<8s}{row['size']:<8s}"
                f"{row['material'][:19]:<20s}"
                f"{fmt(row['primal_err_pct'], '+.3f'):>9s}{fmt(row['dual_err_pct'], '+.3f'):>9s}"
                f"{fmt(row['upper_err_pct'], '+.3f'):>9s}{fmt(row['lower_err_pct'], '+.3f'):>9s}"
                f"{fmt(row['gap'], '.4f'):>8s}{flag}"
            )
        report.append("-" * 100)
        report.append("* tightest guaranteed interval per method; ⚠️ primal-dual gap above the failure threshold")
        report.append("=" * 100)
        return "\n".join(report)

    def generate_check_report(self, results: List, title: str = "PROPERTY CHECKS") -> str:
        passed = sum(1 for r in results if r.passed)
        report = []
        report.append("=" * 70)
        report.append(title)
        report.append("=" * 70)
        for r in results:
            icon = "✅" if r.passed else "❌"
            report.append(f"{icon} {r.name}")
            if r.detail:
                report.append(f"     {r.detail}")
        report.append("-" * 70)
        report.append(f"Passed: {passed}/{len(results)}")
        report.append("=" * 70)
        return "\n".join(report)

    def save_text_report(self, text: str, output_file: str) -> Tuple[bool, str]:
        """Save a report string to a file"""
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
            output_path = self.output_dir / output_file
            output_path.write_text(text + "\n", encoding="utf-8")
            return True, f"Report saved to {output_path}"
        except Exception as e:
            return False, f"Report save failed: {str(e)}"
