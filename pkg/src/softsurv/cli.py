"""Command-line interface.

Subcommands: ``simulate``, ``fit``, ``predict``, ``rmst``, ``lpml``,
``benchmark``.  Every run logs its resolved configuration and seed to
stderr so any output can be regenerated from the log line alone.  Errors
exit nonzero with a single machine-parsable line on stderr:

    softsurv: error: <usage|data|numeric>: <message>

Exit codes: 0 success, 2 usage, 3 malformed input files, 4 numerical
failure.  The ``predict`` and ``benchmark`` report paths also render a
figure next to the delimited output (``--no-figures`` turns that off).

A ``--config FILE`` of flat ``key=value`` lines supplies defaults; explicit
flags win.  Keys use flag names with dashes or underscores.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .augment import AugmentationError
from .data import DataFormatError, read_covariates, read_records, write_records
from .forest import ForestHyper
from .predict import (
    PredictionError,
    SurvivalCurve,
    lpml,
    rmst,
    survival_matrix,
)
from .rng import RngStream
from .sampler import FitConfig, fit, fit_no_frailty
from .simbench import SETTINGS, SimConfig, generate, run_benchmark
from .store import StoreFormatError, load_draws, save_draws

__all__ = ["main"]

log = logging.getLogger("softsurv")

_EXIT_USAGE, _EXIT_DATA, _EXIT_NUMERIC = 2, 3, 4


def _pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected a,b pair, got {text!r}")
    return float(parts[0]), float(parts[1])


def _times(text: str) -> np.ndarray:
    try:
        vals = np.array([float(tok) for tok in text.split(",") if tok.strip()])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad times list {text!r}") from exc
    if len(vals) == 0:
        raise argparse.ArgumentTypeError("empty times list")
    return vals


def _build_parser(defaults: dict | None = None) -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="softsurv",
        description="Soft-tree survival regression with cluster frailties",
    )
    top.add_argument("--config", help="key=value defaults file", default=None)
    top.add_argument("--quiet", action="store_true", help="log warnings only")
    sub = top.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write one synthetic training dataset")
    sim.add_argument("--setting", choices=SETTINGS, required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--replicate", type=int, default=0)
    sim.add_argument("--n", type=int, default=100, help="subjects (settings A, C)")
    sim.add_argument("--clusters", type=int, default=10, help="clusters (settings B, D)")
    sim.add_argument("--cluster-size", type=int, default=10)

    fitp = sub.add_parser("fit", help="run the sampler on an observation file")
    fitp.add_argument("--data", required=True)
    fitp.add_argument("--out", required=True, help="draw-store path")
    fitp.add_argument("--seed", type=int, required=True)
    fitp.add_argument("--family", choices=("exponential", "weibull"), default="exponential")
    fitp.add_argument("--trees", type=int, default=50)
    fitp.add_argument("--burn", type=int, default=2500)
    fitp.add_argument("--draws", type=int, default=2500)
    fitp.add_argument("--thin", type=int, default=1)
    fitp.add_argument("--eta-prior", type=_pair, default=(4.0, 0.01), metavar="A,B")
    fitp.add_argument(
        "--rate-prior", type=_pair, default=None, metavar="A,B",
        help="baseline rate prior; default matches the crude event rate",
    )
    fitp.add_argument("--shape-prior", type=_pair, default=(1.0, 1.0), metavar="A,B")
    fitp.add_argument("--time-scale", type=float, default=None)
    fitp.add_argument("--no-frailty", action="store_true")

    pred = sub.add_parser("predict", help="posterior predictive survival curves")
    pred.add_argument("--draws", required=True, dest="draws_path")
    pred.add_argument("--at", required=True, help="covariate file x1..xp")
    pred.add_argument("--times", type=_times, required=True)
    pred.add_argument("--out", required=True)
    pred.add_argument("--mode", choices=("unit", "marginal"), default="unit")
    pred.add_argument("--grid", type=int, default=200)
    pred.add_argument("--no-figures", action="store_true")

    rm = sub.add_parser("rmst", help="restricted mean survival time")
    rm.add_argument("--draws", required=True, dest="draws_path")
    rm.add_argument("--at", required=True)
    rm.add_argument("--tau", type=float, required=True)
    rm.add_argument("--out", default=None, help="default: print to stdout")
    rm.add_argument("--mode", choices=("unit", "marginal"), default="unit")
    rm.add_argument("--grid", type=int, default=200)

    lp = sub.add_parser("lpml", help="log pseudo marginal likelihood of a fit")
    lp.add_argument("--draws", required=True, dest="draws_path")
    lp.add_argument("--data", required=True)
    lp.add_argument("--grid", type=int, default=200)

    bench = sub.add_parser("benchmark", help="replicate RMSE study for one setting")
    bench.add_argument("--setting", choices=SETTINGS, required=True)
    bench.add_argument("--out", required=True, help="delimited report path")
    bench.add_argument("--replicates", type=int, default=20)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--burn", type=int, default=2500)
    bench.add_argument("--draws", type=int, default=2500)
    bench.add_argument("--trees", type=int, default=50)
    bench.add_argument("--n", type=int, default=100)
    bench.add_argument("--clusters", type=int, default=10)
    bench.add_argument("--cluster-size", type=int, default=10)
    bench.add_argument("--threads", type=int, default=1)
    bench.add_argument("--no-figures", action="store_true")

    if defaults:
        # Subparsers parse into a fresh namespace, so config-file defaults
        # must be installed on each of them, not just on the top parser.
        for p in (top, sim, fitp, pred, rm, lp, bench):
            p.set_defaults(**defaults)
    return top


def _load_config_file(path: str) -> dict:
    values = {}
    for ln, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataFormatError(f"{path}:{ln}: expected key=value")
        key, _, val = line.partition("=")
        values[key.strip().replace("-", "_")] = val.strip()
    return values


def _coerce(val: str):
    low = val.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(val)
        except ValueError:
            pass
    return val


def _parse(argv) -> argparse.Namespace:
    # Two-phase parse: --config is read first and its values become parser
    # defaults everywhere, so explicit flags still override them.
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    pre, _ = probe.parse_known_args(argv)
    defaults = None
    if pre.config:
        defaults = {k: _coerce(v) for k, v in _load_config_file(pre.config).items()}
    return _build_parser(defaults).parse_args(argv)


def _figure_path(out: str) -> Path:
    return Path(out).with_suffix(".png")


def _cmd_simulate(args) -> int:
    cfg = SimConfig(
        setting=args.setting,
        n=args.n,
        n_clusters=args.clusters,
        cluster_size=args.cluster_size,
        seed=args.seed,
    )
    data = generate(cfg, RngStream(cfg.seed, (args.replicate, 0)))
    write_records(args.out, data.train)
    log.info("wrote %d records to %s", len(data.train), args.out)
    return 0


def _fit_config_from_args(args) -> FitConfig:
    return FitConfig(
        family=args.family,
        n_draws=args.draws,
        n_burn=args.burn,
        thin=args.thin,
        forest=ForestHyper(n_trees=args.trees),
        eta_prior=tuple(args.eta_prior),
        rate_prior=tuple(args.rate_prior) if args.rate_prior else None,
        shape_prior=tuple(args.shape_prior),
        time_scale=args.time_scale,
    )


def _cmd_fit(args) -> int:
    records = read_records(args.data)
    cfg = _fit_config_from_args(args)
    runner = fit_no_frailty if args.no_frailty else fit
    draws = runner(records, cfg, args.seed)
    save_draws(draws, args.out)
    log.info("saved %d draws to %s", draws.n_draws, args.out)
    return 0


def _curves(args):
    draws = load_draws(args.draws_path)
    x = read_covariates(args.at)
    return draws, x


def _cmd_predict(args) -> int:
    draws, x = _curves(args)
    times = np.sort(np.asarray(args.times, dtype=float))
    if np.any(times < 0.0):
        raise ValueError("prediction times must be nonnegative")
    values = survival_matrix(draws, x, times, mode=args.mode, grid_size=args.grid)
    rows = ["subject,time,mean,lower,upper"]
    panels = []
    for i in range(x.shape[0]):
        curve = SurvivalCurve(times, values[:, i, :])
        mean, lo, hi = curve.mean, curve.lower, curve.upper
        panels.append((mean, lo, hi))
        for k, t in enumerate(times):
            rows.append(f"{i + 1},{float(t)!r},{mean[k]:.6f},{lo[k]:.6f},{hi[k]:.6f}")
    Path(args.out).write_text("\n".join(rows) + "\n")
    log.info("wrote %d curve rows to %s", len(rows) - 1, args.out)
    if not args.no_figures:
        from .figures import survival_figure

        fig = survival_figure(times, panels, _figure_path(args.out), args.mode)
        log.info("rendered %s", fig)
    return 0


def _cmd_rmst(args) -> int:
    draws, x = _curves(args)
    if args.tau < 0.0:
        raise ValueError("tau must be nonnegative")
    times = np.linspace(0.0, args.tau, max(args.grid, 2))
    values = survival_matrix(draws, x, times, mode=args.mode, grid_size=args.grid)
    rows = ["subject,tau,mean,lower,upper"]
    for i in range(x.shape[0]):
        summary = rmst(SurvivalCurve(times, values[:, i, :]), args.tau)
        rows.append(
            f"{i + 1},{args.tau!r},{summary.mean:.6f},{summary.lower:.6f},{summary.upper:.6f}"
        )
    text = "\n".join(rows) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        log.info("wrote %s", args.out)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_lpml(args) -> int:
    draws = load_draws(args.draws_path)
    records = read_records(args.data)
    value = lpml(records, draws, grid_size=args.grid)
    sys.stdout.write(f"lpml {value:.6f}\n")
    return 0


def _cmd_benchmark(args) -> int:
    cfg = SimConfig(
        setting=args.setting,
        n=args.n,
        n_clusters=args.clusters,
        cluster_size=args.cluster_size,
        n_replicates=args.replicates,
        seed=args.seed,
        n_burn=args.burn,
        n_draws=args.draws,
        n_trees=args.trees,
    )
    report = run_benchmark(cfg, threads=args.threads)
    Path(args.out).write_text(report.to_delimited())
    sys.stdout.write(report.summary())
    log.info("wrote %s", args.out)
    if not args.no_figures:
        from .figures import benchmark_figure

        fig = benchmark_figure(report, _figure_path(args.out))
        log.info("rendered %s", fig)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "rmst": _cmd_rmst,
    "lpml": _cmd_lpml,
    "benchmark": _cmd_benchmark,
}


def _fail(category: str, code: int, exc: BaseException) -> int:
    message = str(exc).splitlines()[0] if str(exc) else exc.__class__.__name__
    print(f"softsurv: error: {category}: {message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = _parse(argv)
    except (DataFormatError, OSError) as exc:
        # A broken --config file fails like any other malformed input.
        return _fail("data", _EXIT_DATA, exc)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    shown = {k: v for k, v in vars(args).items() if k not in ("config", "quiet")}
    log.info("resolved config: %s", shown)
    try:
        return _COMMANDS[args.command](args)
    except (DataFormatError, StoreFormatError, OSError) as exc:
        return _fail("data", _EXIT_DATA, exc)
    except (AugmentationError, PredictionError, np.linalg.LinAlgError) as exc:
        return _fail("numeric", _EXIT_NUMERIC, exc)
    except ValueError as exc:
        return _fail("usage", _EXIT_USAGE, exc)


if __name__ == "__main__":
    sys.exit(main(None))
