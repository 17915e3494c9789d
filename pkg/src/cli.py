"""
CLI - Command-line entry point: python -m src.cli {fem,train,report,check,sweep}

Exit codes: 0 success, 1 failed checks, 2 invalid configuration, 3 numerical or export failure.
"""

import argparse
import logging
import sys
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional

from src import cell_material as cm
from src.autodiff import set_deterministic
from src.batch_processor import BatchProcessor, load_sweep
from src.bounds import project_to_p1
from src.checks import run_checks
from src.config import RunConfig, apply_environment, load_config, parse_override
from src.errors import ConfigError, HomogenizationError, TrainingAborted
from src.export_manager import ExportManager, collect_run_records, load_run_record
from src.fem import build_mesh, run_benchmark
from src.losses import phasewise_residual
from src.network import init
from src.quadrature import CollocationGrid
from src.report_generator import ReportGenerator
from src.training import DUAL_CONVENTION, LossSpec, RunRecord, train_primal_dual

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ExportError(HomogenizationError):
    """A result file could not be written"""


def _check_export(outcome) -> None:
    success, message = outcome
    if not success:
        raise ExportError(message)
    logger.debug(message)


def run_fem(config: RunConfig) -> Dict:
    """Both FEM solves and their bounds; writes run.json and the solution CSVs"""
    material = config.material_field()
    result = run_benchmark(config.fem_n, material, tuple(config.loading), rtol=config.fem_rtol,
                           max_iter=config.fem_max_iter)
    exact = cm.obnosov_effective(material.phases)
    record = RunRecord(
        method="fem",
        config=config.to_dict(),
        final=result.report.to_dict(exact),
        metadata={
            "dual_estimate_convention": DUAL_CONVENTION,
            "bounds_material": material.label(),
            "training_material": material.label(),
            "bounds_mesh_n": config.fem_n,
            "exact_reference": exact,
        },
    )
    exporter = ExportManager(config.output_dir)
    _check_export(exporter.export_solution(result.primal, config.fem_n, "primal"))
    _check_export(exporter.export_solution(result.dual, config.fem_n, "dual"))
    data = record.to_dict()
    _check_export(exporter.export_run_record(data))
    return data


def _export_networks(exporter: ExportManager, nets: Dict, config: RunConfig, sides) -> None:
    grid = CollocationGrid(config.grid_n)
    material = config.material_field()
    mesh = build_mesh(config.grid_n, material.reference())
    for side in sides:
        net = nets[side]
        _check_export(exporter.export_params(net, side))
        _check_export(exporter.export_solution(project_to_p1(net, mesh), mesh.n, side))
        residual = phasewise_residual(net, material, config.loading, grid, side)
        _check_export(exporter.export_residual(residual, grid, side))


def run_training(config: RunConfig, apply_determinism: bool = True) -> Dict:
    """
    Train the configured sides; writes run.json, curve.csv, parameters, solutions, residuals

    With apply_determinism=False the process-wide torch setting is left to the caller.
    """
    material = config.material_field()
    net_config = config.network_config()
    basis = config.build_basis()
    specs = {
        side: LossSpec(config.loss_form, side, material, tuple(config.loading), basis)
        for side in config.sides
    }
    nets = {"primal": init(net_config, config.seed), "dual": init(net_config, config.seed + 1)}
    nets = {side: nets[side] for side in config.sides}
    exporter = ExportManager(config.output_dir)
    try:
        train_config = config.train_config()
        if not apply_determinism:
            train_config.deterministic = None
        nets, record = train_primal_dual(nets, specs, train_config, method=config.method,
                                         echo=config.to_dict(), out_dir=Path(config.output_dir))
    except TrainingAborted as exc:
        data = exc.record.to_dict()
        exporter.export_run_record(data)
        exporter.export_curve(data["history"])
        for side, net in exc.last_good_params.items():
            exporter.export_params(net, side)
        raise
    data = record.to_dict()
    _check_export(exporter.export_run_record(data))
    _check_export(exporter.export_curve(data["history"]))
    _export_networks(exporter, nets, config, config.sides)
    return data


def execute_run(config: RunConfig, apply_determinism: bool = True) -> Dict:
    if config.method == "fem":
        return run_fem(config)
    return run_training(config, apply_determinism)


# -- subcommands ------------------------------------------------------------------------

def _config_from_args(args, **extra) -> RunConfig:
    return load_config(
        args.config,
        args.set or [],
        output_dir=args.out,
        deterministic=True if args.deterministic else None,
        **extra,
    )


def cmd_fem(args) -> int:
    config = _config_from_args(args, method="fem")
    data = run_fem(config)
    print(ReportGenerator(config.output_dir).generate_bounds_table(data["final"], f"FEM BOUNDS (n={config.fem_n})"))
    return EXIT_OK


def cmd_train(args) -> int:
    config = _config_from_args(args)
    data = execute_run(config)
    title = f"{config.method.upper()} ({config.form}) on {data['metadata'].get('training_material')}"
    print(ReportGenerator(config.output_dir).generate_bounds_table(data["final"], title))
    if data.get("suspected_failure"):
        print("⚠️ Suspected failure: the primal-dual gap exceeds the threshold")
    return EXIT_OK


def _report_for(paths: List[str], out: Optional[str], xlsx: bool) -> int:
    records = []
    for raw in paths:
        path = Path(raw)
        if not path.exists():
            logger.warning(f"⚠️ Skipping {path}: not found")
        elif path.is_file():
            record = load_run_record(path)
            if record is not None:
                records.append((path.parent.name, record))
        else:
            records.extend(collect_run_records(path))
    if not records:
        logger.warning("⚠️ No valid run records found; writing an empty report")

    out_dir = Path(out) if out else Path(paths[0]) if Path(paths[0]).is_dir() else Path(paths[0]).parent
    generator = ReportGenerator(str(out_dir))
    rows = generator.summary_rows(records)
    text = generator.generate_consolidated_report(rows)
    if len(records) == 1 and records[0][1].get("final"):
        text = generator.generate_bounds_table(records[0][1]["final"], f"RUN {records[0][0]}") + "\n\n" + text
    print(text)

    exporter = ExportManager(str(out_dir))
    _check_export(exporter.export_report_csv(rows))
    if xlsx:
        _check_export(exporter.export_report_xlsx(rows))
    _check_export(generator.save_text_report(text, "report.txt"))
    return EXIT_OK


def cmd_report(args) -> int:
    return _report_for(args.runs, args.out, args.xlsx)


def cmd_check(args) -> int:
    config = _config_from_args(args)
    results = run_checks(config, include_benchmark=not args.quick)
    print(ReportGenerator(config.output_dir).generate_check_report(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECKS_FAILED


def cmd_sweep(args) -> int:
    sweep = load_sweep(args.config)
    base = dict(sweep["base"])
    for item in args.set or []:
        key, value = parse_override(item)
        base[key] = value
    if args.deterministic:
        base["deterministic"] = True
    out_root = Path(args.out or base.get("output_dir") or RunConfig().output_dir)

    def progress(completed, total, message):
        logger.info(f"[{completed}/{total}] {message}")

    # torch determinism is process-wide, so it is set once for every worker
    set_deterministic(bool(base.get("deterministic", False)))
    processor = BatchProcessor(partial(execute_run, apply_determinism=False), max_workers=sweep["max_workers"])
    results = processor.process_sweep(base, sweep["points"], out_root, progress_callback=progress)
    stats = processor.get_summary_stats()
    logger.info(f"Sweep finished: {stats['successful']}/{stats['total']} succeeded, "
                f"{stats['suspected_failures']} suspected failures")
    code = _report_for([str(out_root)], str(out_root), args.xlsx)
    return EXIT_NUMERIC if any(not r["success"] for r in results) else code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m src.cli",
        description="Primal/dual PINN homogenization with guaranteed bounds",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="YAML run configuration")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", help="output directory")
        p.add_argument("--deterministic", action="store_true", help="fixed-order reductions")
        p.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS, help="debug logging")

    p = sub.add_parser("fem", help="FEM benchmark bounds")
    common(p)
    p.set_defaults(func=cmd_fem)

    p = sub.add_parser("train", help="train primal/dual networks")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("report", help="consolidate run records")
    p.add_argument("runs", nargs="+", help="run directories or run.json files")
    p.add_argument("--out", help="where report.csv/report.xlsx go")
    p.add_argument("--xlsx", action="store_true", help="also write report.xlsx")
    p.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS, help="debug logging")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("check", help="run the property suite")
    common(p)
    p.add_argument("--quick", action="store_true", help="skip the FEM benchmark at fem_n")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("sweep", help="run a parameter sweep")
    common(p, config_required=True)
    p.add_argument("--xlsx", action="store_true", help="also write report.xlsx")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    apply_environment()
    try:
        return args.func(args)
    except ConfigError as e:
        logger.error(f"❌ {e}")
        return EXIT_CONFIG
    except HomogenizationError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
