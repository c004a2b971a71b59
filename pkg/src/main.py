"""
Main entry point for the S-MIL laboratory
"""
import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from config import Aggregator, GradMethod, Settings, Verdict, get_settings
from src.analysis import bag_loss_graph, export_surface, lemma2b_case, surface_m2, vanish_fraction
from src.data import Dataset, fake_rate_sweep, generate, read_jsonl, write_jsonl
from src.diffcore import GradReport, gradcheck, primitive_sweep
from src.mil import AttentionParams, encoder_gradcheck, init_conv
from src.training import (
    ModelConfig,
    SmilModel,
    evaluate,
    load_model,
    save_model,
    train,
    write_history,
)
from src.utils import ConfigError, NumericalError, derive_rng, to_json, write_csv, write_json
from src.utils.run_config import RunConfig, load_run_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4

SWEEP_HEADER = ("rate", "aggregator", "kernels", "bag_acc", "bag_auc", "instance_auc")
FRAMES_HEADER = ("frames", "bag_acc", "bag_auc")
KERNEL_SUBSETS = ((1,), (2,), (3,), (1, 2), (1, 3), (2, 3), (1, 2, 3))


def configure_logging(settings: Settings) -> None:
    """Console logging, plus a file handler when SMIL_LOG_FILE is set"""
    handlers: list[logging.Handler] = [logging.StreamHandler()]
    if settings.log_file:
        try:
            handlers.append(logging.FileHandler(settings.log_file, encoding="utf-8"))
        except OSError as e:
            raise ConfigError(f"Cannot open log file {settings.log_file}: {e}") from e
    logging.basicConfig(
        level=settings.log_level.upper(),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
        force=True,
    )


def _output_dir(args: argparse.Namespace, settings: Settings, run: Optional[RunConfig] = None) -> Path:
    if getattr(args, "out_dir", None):
        return Path(args.out_dir)
    if run is not None and run.output_dir:
        return Path(run.output_dir)
    return Path(settings.output_dir)


def _out_path(args: argparse.Namespace, settings: Settings, default_name: str) -> Path:
    return Path(args.out) if args.out else _output_dir(args, settings) / default_name


def _kernel_tag(kernels: Sequence[int]) -> str:
    return "-".join(str(k) for k in kernels)


def _parse_kernels(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split("-"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"kernel set must look like 1-2-3, got '{text}'") from None


def _run_config(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "data.seed": getattr(args, "data_seed", None),
        "data.n_bags": getattr(args, "n_bags", None),
        "test_bags": getattr(args, "test_bags", None),
        "hyper.lr": getattr(args, "lr", None),
        "hyper.epochs": getattr(args, "epochs", None),
        "hyper.batch": getattr(args, "batch", None),
        "hyper.seed": getattr(args, "seed", None),
        "model.aggregator": getattr(args, "aggregator", None),
        "model.kernels": getattr(args, "kernels", None),
    }
    return load_run_config(args.config, overrides)


# Analysis commands


def cmd_surface(args: argparse.Namespace, settings: Settings) -> int:
    surface = surface_m2(args.n, args.lo, args.hi)
    path = export_surface(surface, _out_path(args, settings, "surface.csv"))
    print(path)
    return EXIT_OK


def _verdict(sharp: float, traditional: float) -> str:
    if sharp < traditional:
        return Verdict.SHARP_SMALLER
    if sharp > traditional:
        return Verdict.SHARP_LARGER
    return Verdict.EQUAL


def cmd_vanish(args: argparse.Namespace, settings: Settings) -> int:
    seed = settings.default_seed if args.seed is None else args.seed
    workers = args.workers or settings.vanish_workers
    reports = [
        vanish_fraction(method, args.m, tau, args.samples, seed, workers=workers)
        for tau in args.tau
        for method in args.methods
    ]
    comparisons = []
    if set(GradMethod.ALL) <= set(args.methods):
        for tau in args.tau:
            fractions = {r.method: r.fraction for r in reports if r.tau == float(tau)}
            comparisons.append(
                {
                    "tau": float(tau),
                    "traditional": fractions[GradMethod.TRADITIONAL],
                    "sharp": fractions[GradMethod.SHARP],
                    "verdict": _verdict(fractions[GradMethod.SHARP], fractions[GradMethod.TRADITIONAL]),
                }
            )
    document = {
        "m": args.m,
        "samples": args.samples,
        "seed": seed,
        "reports": [r.to_dict() for r in reports],
        "comparisons": comparisons,
    }
    write_json(_out_path(args, settings, "vanish.json"), document)
    print(to_json(document))
    return EXIT_OK


def cmd_lemma(args: argparse.Namespace, settings: Settings) -> int:
    record = lemma2b_case(args.m, args.eps, args.delta)
    write_json(_out_path(args, settings, "lemma.json"), record.to_dict())
    print(to_json(record.to_dict()))
    return EXIT_OK


def gradcheck_suite(seed: int, points: int = 1) -> list[GradReport]:
    """Primitive sweep, both bag-loss graphs and the encoder check for every kernel subset"""
    reports = primitive_sweep(seed, points=points)
    rng = derive_rng(seed, "gradcheck", 1)
    for method in GradMethod.ALL:
        for m in (1, 2, 5):
            p = rng.uniform(0.05, 0.95, size=m)
            reports.append(gradcheck(bag_loss_graph(method, m), {"p": p}, label=f"{method} bag loss M={m}"))

    m, d, r = 6, 4, 3
    for sizes in KERNEL_SUBSETS:
        kernels = [init_conv(k, d, r, rng) for k in sizes]
        heads = [
            AttentionParams(rng.standard_normal(r), rng.standard_normal(r), float(rng.uniform(-0.5, 0.5)))
            for _ in kernels
        ]
        reports.append(encoder_gradcheck(rng.standard_normal((m, d)), kernels, heads))
    return reports


def cmd_gradcheck(args: argparse.Namespace, settings: Settings) -> int:
    seed = settings.default_seed if args.seed is None else args.seed
    reports = gradcheck_suite(seed, args.points)
    passed = all(r.passed for r in reports)
    document = {"seed": seed, "passed": passed, "checks": [r.summary() for r in reports]}
    write_json(_out_path(args, settings, "gradcheck.json"), document)
    print(to_json(document))
    if not passed:
        failed = [r.label for r in reports if not r.passed]
        raise NumericalError(f"gradient checks failed: {failed}")
    return EXIT_OK


# Data and model commands


def cmd_gen(args: argparse.Namespace, settings: Settings) -> int:
    run = _run_config(args)
    out_dir = _output_dir(args, settings, run)
    write_jsonl(generate(run.data), out_dir / "train.jsonl")
    write_jsonl(generate(run.test_config()), out_dir / "test.jsonl")
    write_json(out_dir / "run_config.json", run.model_dump(mode="json"))
    return EXIT_OK


def cmd_train(args: argparse.Namespace, settings: Settings) -> int:
    run = _run_config(args)
    out_dir = _output_dir(args, settings, run)
    train_ds = read_jsonl(args.train or out_dir / "train.jsonl")
    test_ds = read_jsonl(args.test or out_dir / "test.jsonl")
    model_cfg = ModelConfig(**{**run.model.model_dump(), "d": train_ds.config.d})

    model, history = train(SmilModel.init(model_cfg, run.hyper.seed), train_ds, run.hyper, test=test_ds)
    save_model(model, out_dir / "model.json")
    write_history(history, out_dir / "history.csv")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, settings: Settings) -> int:
    out_dir = _output_dir(args, settings)
    model = load_model(args.model or out_dir / "model.json")
    ds = read_jsonl(args.data or out_dir / "test.jsonl")
    metrics = evaluate(model, ds, frames=args.frames)
    write_json(_out_path(args, settings, "metrics.json"), metrics.to_dict())
    print(to_json(metrics.to_dict()))
    return EXIT_OK


def cmd_frames(args: argparse.Namespace, settings: Settings) -> int:
    out_dir = _output_dir(args, settings)
    model = load_model(args.model or out_dir / "model.json")
    ds = read_jsonl(args.data or out_dir / "test.jsonl")
    rows = []
    for count in sorted(set(args.frames)):
        metrics = evaluate(model, ds, frames=count)
        rows.append((count, metrics.bag_accuracy, metrics.bag_auc))
    write_csv(_out_path(args, settings, "frames.csv"), FRAMES_HEADER, rows)
    return EXIT_OK


def _sweep_cell(run: RunConfig, train_ds: Dataset, test_ds: Dataset, aggregator: str, kernels) -> tuple:
    model_cfg = ModelConfig(**{**run.model.model_dump(), "aggregator": aggregator, "kernels": kernels})
    model, _ = train(SmilModel.init(model_cfg, run.hyper.seed), train_ds, run.hyper)
    metrics = evaluate(model, test_ds)
    logger.info(
        f"Sweep cell fakes={train_ds.config.fake_count_lo} {aggregator} kernels={_kernel_tag(kernels)}: "
        f"bag acc {metrics.bag_accuracy:.4f}"
    )
    return metrics.bag_accuracy, metrics.bag_auc, metrics.instance_auc_pos


def cmd_sweep(args: argparse.Namespace, settings: Settings) -> int:
    run = _run_config(args)
    rates = [float(rate) for rate in args.rates]
    datasets = {
        rate: (generate(train_cfg), generate(test_cfg))
        for rate, train_cfg, test_cfg in zip(
            rates, fake_rate_sweep(run.data, rates), fake_rate_sweep(run.test_config(), rates)
        )
    }
    cells = [
        (rate, aggregator, tuple(sorted(kernels)))
        for rate in datasets
        for aggregator in args.aggregators
        for kernels in args.kernel_sets
    ]

    def _run(cell):
        rate, aggregator, kernels = cell
        return (rate, aggregator, _kernel_tag(kernels)) + _sweep_cell(run, *datasets[rate], aggregator, kernels)

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_run, cells))
    else:
        rows = [_run(cell) for cell in cells]
    rows.sort(key=lambda row: (row[0], row[1], row[2]))

    write_csv(_out_path(args, settings, "sweep.csv"), SWEEP_HEADER, rows)
    return EXIT_OK


def build_parser(settings: Settings) -> argparse.ArgumentParser:
    """Argument parser with one subcommand per experiment"""
    parser = argparse.ArgumentParser(
        prog="python -m src.main",
        description="S-MIL laboratory: aggregation, gradient analysis and synthetic training runs",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Gradient surfaces for plotting
  python -m src.main surface --n 201 --lo 0.005 --hi 0.995 --out s.csv

  # Vanishing-region Monte Carlo
  python -m src.main vanish --m 2 --tau 0.1 0.05 0.01

  # Generate data, train and evaluate
  python -m src.main gen --config run.json
  python -m src.main train --config run.json
  python -m src.main eval
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    defaults = argparse.ArgumentDefaultsHelpFormatter

    def _common(p: argparse.ArgumentParser, out: bool = True) -> None:
        p.add_argument("--out-dir", type=str, default=None, help=f"Output directory (default {settings.output_dir})")
        if out:
            p.add_argument("--out", type=str, default=None, help="Output file (default inside --out-dir)")

    def _run_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=str, default=None, help="Run config JSON file")
        p.add_argument("--seed", type=int, default=None, help="Override hyper.seed")
        p.add_argument("--data-seed", type=int, default=None, help="Override data.seed")
        p.add_argument("--n-bags", type=int, default=None, help="Override data.n_bags")
        p.add_argument("--test-bags", type=int, default=None, help="Override test_bags")
        p.add_argument("--lr", type=float, default=None, help="Override hyper.lr")
        p.add_argument("--epochs", type=int, default=None, help="Override hyper.epochs")
        p.add_argument("--batch", type=int, default=None, help="Override hyper.batch")

    p = sub.add_parser("surface", help="M=2 gradient surfaces as CSV", formatter_class=defaults)
    p.add_argument("--n", type=int, default=201, help="Grid points per axis")
    p.add_argument("--lo", type=float, default=0.005, help="First axis value")
    p.add_argument("--hi", type=float, default=0.995, help="Last axis value")
    _common(p)
    p.set_defaults(handler=cmd_surface)

    p = sub.add_parser("vanish", help="Monte-Carlo vanishing fractions", formatter_class=defaults)
    p.add_argument("--methods", nargs="+", choices=GradMethod.ALL, default=list(GradMethod.ALL), help="Methods")
    p.add_argument("--m", type=int, default=2, help="Instances per bag")
    p.add_argument("--tau", type=float, nargs="+", default=[0.1, 0.05, 0.01], help="Thresholds")
    p.add_argument("--samples", type=int, default=1_000_000, help="Uniform samples")
    p.add_argument("--seed", type=int, default=None, help=f"Seed (default {settings.default_seed})")
    p.add_argument("--workers", type=int, default=None, help=f"Threads (default {settings.vanish_workers})")
    _common(p)
    p.set_defaults(handler=cmd_vanish)

    p = sub.add_parser("lemma", help="Gradient contrast at (eps, 1-eps, delta, ...)", formatter_class=defaults)
    p.add_argument("--m", type=int, default=4, help="Instances per bag, >= 3")
    p.add_argument("--eps", type=float, default=1e-4, help="Extreme-instance offset, in (0, 1e-3]")
    p.add_argument("--delta", type=float, default=0.3, help="Value of the remaining instances")
    _common(p)
    p.set_defaults(handler=cmd_lemma)

    p = sub.add_parser("gradcheck", help="Finite-difference checks of all gradients", formatter_class=defaults)
    p.add_argument("--seed", type=int, default=None, help=f"Seed (default {settings.default_seed})")
    p.add_argument("--points", type=int, default=1, help="Random input draws per primitive case")
    _common(p)
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("gen", help="Generate train and test datasets", formatter_class=defaults)
    _run_flags(p)
    _common(p, out=False)
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("train", help="Train a model", formatter_class=defaults)
    _run_flags(p)
    p.add_argument("--aggregator", choices=Aggregator.ALL, default=None, help="Override model.aggregator")
    p.add_argument("--kernels", type=_parse_kernels, default=None, help="Override model.kernels, e.g. 1-2-3")
    p.add_argument("--train", type=str, default=None, help="Training JSONL (default <out-dir>/train.jsonl)")
    p.add_argument("--test", type=str, default=None, help="Test JSONL (default <out-dir>/test.jsonl)")
    _common(p, out=False)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="Evaluate a saved model", formatter_class=defaults)
    p.add_argument("--model", type=str, default=None, help="Model file (default <out-dir>/model.json)")
    p.add_argument("--data", type=str, default=None, help="Dataset JSONL (default <out-dir>/test.jsonl)")
    p.add_argument("--frames", type=int, default=None, help="Uniformly extracted frames per bag (default all)")
    _common(p)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("frames", help="Accuracy against the number of inference frames", formatter_class=defaults)
    p.add_argument("--model", type=str, default=None, help="Model file (default <out-dir>/model.json)")
    p.add_argument("--data", type=str, default=None, help="Dataset JSONL (default <out-dir>/test.jsonl)")
    p.add_argument("--frames", type=int, nargs="+", default=[1, 2, 4, 8, 12, 16, 20], help="Frame counts")
    _common(p)
    p.set_defaults(handler=cmd_frames)

    p = sub.add_parser("sweep", help="Fake-rate sweep over aggregators and kernel sets", formatter_class=defaults)
    _run_flags(p)
    p.add_argument("--rates", type=float, nargs="+", default=[0.1, 0.25, 0.5, 1.0], help="Fake rates")
    p.add_argument("--aggregators", nargs="+", choices=Aggregator.ALL, default=list(Aggregator.ALL), help="Aggregators")
    p.add_argument(
        "--kernel-sets", type=_parse_kernels, nargs="+", default=[(1,), (1, 2, 3)], help="Kernel sets, e.g. 1 1-2-3"
    )
    p.add_argument("--workers", type=int, default=1, help="Parallel training runs")
    _common(p)
    p.set_defaults(handler=cmd_sweep)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code"""
    try:
        settings = get_settings()
        configure_logging(settings)
        args = build_parser(settings).parse_args(argv)
        return args.handler(args, settings)
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        logger.error(f"Invalid input: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
