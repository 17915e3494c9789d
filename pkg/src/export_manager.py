"""
Export Manager - Write run records, curves, solutions, parameters and report tables
"""

import csv
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.network import PeriodicNet, export_params_csv, save_params
from src.quadrature import CollocationGrid
from src.report_generator import REPORT_COLUMNS

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ["epoch", "loss", "primal_estimate", "dual_estimate", "gap", "primal_loss", "dual_loss"]

# Required run.json keys and their accepted types
RECORD_SCHEMA = {
    "method": (str,),
    "config": (dict,),
    "history": (list,),
    "final": (dict, type(None)),
    "final_loss": (dict,),
    "suspected_failure": (bool, type(None)),
    "gram": (dict,),
    "metadata": (dict,),
    "status": (str,),
    "wall_clock_seconds": (int, float),
    "created_at": (str,),
}
FINAL_KEYS = ("primal_estimate", "dual_estimate", "upper_bound", "lower_bound", "gap")


def validate_run_record(data) -> List[str]:
    """Problems with a loaded run.json; empty when the record is usable"""
    if not isinstance(data, dict):
        return ["run record is not a JSON object"]
    problems = []
    for key, types in RECORD_SCHEMA.items():
        if key not in data:
            problems.append(f"missing key '{key}'")
        elif not isinstance(data[key], types):
            problems.append(f"'{key}' has type {type(data[key]).__name__}")
    final = data.get("final")
    if isinstance(final, dict):
        for key in FINAL_KEYS:
            if not isinstance(final.get(key), (int, float)) or isinstance(final.get(key), bool):
                problems.append(f"final.{key} missing or not a number")
    for i, entry in enumerate(data.get("history") or []):
        if not isinstance(entry, dict) or "epoch" not in entry or "loss" not in entry:
            problems.append(f"history[{i}] lacks epoch/loss")
            break
    return problems


def _number(value) -> str:
    return "" if value is None else repr(float(value))


class ExportManager:
    """Manage the files of one run directory"""

    def __init__(self, export_dir: str = "runs"):
        self.export_dir = Path(export_dir)
        self.export_dir.mkdir(parents=True, exist_ok=True)

    def export_run_record(self, record: Dict, output_file: str = "run.json") -> Tuple[bool, str]:
        """Sorted keys and fixed indentation so identical runs give identical files"""
        try:
            output_path = self.export_dir / output_file
            with open(output_path, "w", encoding="utf-8") as f:
                json.dump(record, f, indent=2, sort_keys=True, ensure_ascii=False)
                f.write("\n")
            return True, f"Exported to {output_path}"
        except Exception as e:
            return False, f"Run record export failed: {str(e)}"

    def export_curve(self, history: List[Dict], output_file: str = "curve.csv") -> Tuple[bool, str]:
        try:
            output_path = self.export_dir / output_file
            with open(output_path, "w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f)
                writer.writerow(CURVE_COLUMNS)
                for entry in history:
                    writer.writerow([entry["epoch"]] + [_number(entry.get(c)) for c in CURVE_COLUMNS[1:]])
            return True, f"Exported to {output_path}"
        except Exception as e:
            return False, f"Curve export failed: {str(e)}"

    def export_solution(self, dofs: np.ndarray, n: int, side: str) -> Tuple[bool, str]:
        """DoF values with their node coordinates: dof, x1, x2, value"""
        try:
            dofs = np.asarray(dofs, dtype=np.float64)
            points = CollocationGrid(n).points
            if dofs.shape != (points.shape[0],):
                return False, f"Solution export failed: {dofs.shape[0]} values for a {n}x{n} mesh"
            output_path = self.export_dir / f"solution_{side}.csv"
            with open(output_path, "w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f)
                writer.writerow(["dof", "x1", "x2", "value"])
                for k, ((x1, x2), value) in enumerate(zip(points, dofs)):
                    writer.writerow([k, repr(float(x1)), repr(float(x2)), repr(float(value))])
            return True, f"Exported to {output_path}"
        except Exception as e:
            return False, f"Solution export failed: {str(e)}"

    def export_params(self, net: PeriodicNet, side: str) -> Tuple[bool, str]:
        """Binary parameter file plus a CSV copy for inspection"""
        try:
            binary = save_params(net, self.export_dir / f"params_{side}.bin")
            export_params_csv(net, self.export_dir / f"params_{side}.csv")
            return True, f"Exported to {binary}"
        except Exception as e:
            return False, f"Parameter export failed: {str(e)}"

    def export_residual(self, residual: np.ndarray, grid: CollocationGrid, side: str) -> Tuple[bool, str]:
        try:
            output_path = self.export_dir / f"residual_{side}.csv"
            with open(output_path, "w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f)
                writer.writerow(["x1", "x2", "residual"])
                for (x1, x2), value in zip(grid.points, np.asarray(residual).ravel()):
                    writer.writerow([repr(float(x1)), repr(float(x2)), repr(float(value))])
            return True, f"Exported to {output_path}"
        except Exception as e:
            return False, f"Residual export failed: {str(e)}"

    def export_report_csv(self, rows: List[Dict], output_file: str = "report.csv") -> Tuple[bool, str]:
        try:
            output_path = self.export_dir / output_file
            with open(output_path, "w", newline="", encoding="utf-8") as f:
                writer = csv.DictWriter(f, fieldnames=REPORT_COLUMNS)
                writer.writeheader()
                for row in rows:
                    writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in REPORT_COLUMNS})
            return True, f"Exported to {output_path}"
        except Exception as e:
            return False, f"CSV export failed: {str(e)}"

    def export_report_xlsx(self, rows: List[Dict], output_file: str = "report.xlsx") -> Tuple[bool, str]:
        """Report table as a workbook; best-in-group rows are highlighted"""
        try:
            try:
                import openpyxl
                from openpyxl.styles import Font, PatternFill
            except ImportError:
                return False, "openpyxl not installed. Run: pip install openpyxl"

            output_path = self.export_dir / output_file
            wb = openpyxl.Workbook()
            ws = wb.active
            ws.title = "Homogenization Report"

            for col, header in enumerate(REPORT_COLUMNS, 1):
                cell = ws.cell(row=1, column=col, value=header)
                cell.font = Font(bold=True)
                cell.fill = PatternFill(start_color="CCCCCC", end_color="CCCCCC", fill_type="solid")

            highlight = PatternFill(start_color="D9EAD3", end_color="D9EAD3", fill_type="solid")
            for row_idx, row in enumerate(rows, 2):
                for col, key in enumerate(REPORT_COLUMNS, 1):
                    cell = ws.cell(row=row_idx, column=col, value=row.get(key))
                    if row.get("best"):
                        cell.fill = highlight

            for col in ws.columns:
                width = max(len(str(cell.value)) if cell.value is not None else 0 for cell in col)
                ws.column_dimensions[col[0].column_letter].width = min(width + 2, 40)

            wb.save(output_path)
            return True, f"Exported to {output_path}"
        except Exception as e:
            return False, f"Excel export failed: {str(e)}"


def load_run_record(path) -> Optional[Dict]:
    """Load and validate a run.json; corrupt or incomplete records are skipped with a warning"""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        logger.warning(f"⚠️ Skipping {path}: {e}")
        return None
    problems = validate_run_record(data)
    if problems:
        logger.warning(f"⚠️ Skipping {path}: {'; '.join(problems)}")
        return None
    return data


def collect_run_records(root) -> List[Tuple[str, Dict]]:
    """(run name, record) for every valid run.json under root, sorted by path"""
    root = Path(root)
    records = []
    for path in sorted(root.rglob("run.json")):
        record = load_run_record(path)
        if record is not None:
            name = path.parent.relative_to(root).as_posix() if path.parent != root else root.name
            records.append((name, record))
    return records
