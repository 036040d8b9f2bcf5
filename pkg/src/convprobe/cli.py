"""``convprobe`` command line.

Every command accepts ``--config FILE`` (JSON, same layout as
:class:`~convprobe.pipeline.RunConfig`); flags override file values. Exit
status: 0 success, 2 invalid configuration, 3 missing upstream stage,
1 any other failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .pipeline import (
    OUTDIR_ENV,
    STAGES,
    ConfigValidationError,
    RunConfig,
    StageDependencyError,
    apply_overrides,
    load_config,
    run_pipeline,
)
from .signal import DatasetFormatError
from .checkpoint import CheckpointError

log = logging.getLogger("convprobe")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help=f"output directory (default ${OUTDIR_ENV} or ./convprobe-out)")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="cap on BLAS/OpenMP threads")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _add_stage_flags(p: argparse.ArgumentParser, stage: str) -> None:
    if stage in ("synth", "all"):
        g = p.add_argument_group("synth")
        g.add_argument("--n-trials", type=int, help="trials per class")
        g.add_argument("--channels", type=int)
        g.add_argument("--no-car", action="store_true", help="skip common average referencing")
    if stage in ("train", "all"):
        g = p.add_argument_group("train")
        g.add_argument("--epochs", type=int)
        g.add_argument("--batch-size", type=int)
        g.add_argument("--learning-rate", type=float)
    if stage in ("probe", "all"):
        g = p.add_argument_group("probe")
        g.add_argument("--amplitude", action="store_true", help="amplitude perturbations (default: both kinds)")
        g.add_argument("--phase", action="store_true", help="phase perturbations (default: both kinds)")
        g.add_argument("--layers", type=_int_list, help="analysis layers, e.g. 1,2,3,4")
        g.add_argument("--repetitions", type=int)
        g.add_argument("--phase-stat", choices=("abs", "signed"))
        g.add_argument("--mode", choices=("simultaneous", "per_band"))
        g.add_argument("--amplitude-sigma", type=float)
        g.add_argument("--phase-sigma", type=float)
        g.add_argument("--probe-trials", choices=("all", "train", "valid"))
    if stage in ("windows", "all"):
        g = p.add_argument_group("windows")
        g.add_argument("--fraction", type=float)
        g.add_argument("--selection", choices=("trial_max", "units"))
        g.add_argument("--max-filters", type=int)
    if stage in ("fit", "all"):
        g = p.add_argument_group("fit")
        g.add_argument("--no-refine", action="store_true")
        g.add_argument("--fit-channel", choices=("representative", "best"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="convprobe", description="Spectral perturbation analysis of ConvNet layers")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    helps = {
        "synth": "generate the synthetic dataset",
        "train": "train the network",
        "probe": "amplitude/phase perturbation correlations",
        "windows": "most-activating input windows",
        "fit": "sinusoid and linear fits of window medians",
        "report": "SVG charts",
        "all": "run every stage",
    }
    for name in STAGES + ("all",):
        p = sub.add_parser(name, parents=[common], help=helps[name])
        _add_stage_flags(p, name)
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    o: dict = {}

    def put(path: str, value) -> None:
        if value is None:
            return
        d = o
        *head, last = path.split(".")
        for k in head:
            d = d.setdefault(k, {})
        d[last] = value

    g = vars(args)
    put("seed", g.get("seed"))
    put("threads", g.get("threads"))
    put("out_dir", g.get("out"))
    put("synth.n_trials", g.get("n_trials"))
    put("synth.channels", g.get("channels"))
    if g.get("no_car"):
        put("common_average", False)
    put("train.epochs", g.get("epochs"))
    put("train.batch_size", g.get("batch_size"))
    put("train.learning_rate", g.get("learning_rate"))
    if g.get("amplitude") or g.get("phase"):
        put("probe.amplitude", bool(g.get("amplitude")))
        put("probe.phase", bool(g.get("phase")))
    put("probe.trials", g.get("probe_trials"))
    put("probe.perturbation.layers", g.get("layers"))
    put("probe.perturbation.repetitions", g.get("repetitions"))
    put("probe.perturbation.phase_statistic", g.get("phase_stat"))
    put("probe.perturbation.mode", g.get("mode"))
    put("probe.perturbation.amplitude_sigma", g.get("amplitude_sigma"))
    put("probe.perturbation.phase_sigma", g.get("phase_sigma"))
    put("windows.fraction", g.get("fraction"))
    put("windows.mode", g.get("selection"))
    put("windows.max_filters", g.get("max_filters"))
    if g.get("no_refine"):
        put("fit.refine", False)
    put("fit.channel", g.get("fit_channel"))
    return o


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = apply_overrides(cfg, _overrides(args))
        # probe seeds follow the global seed unless the file pins one
        if args.seed is not None:
            cfg.probe.perturbation.seed = args.seed
        cfg.validate()
        stages = STAGES if args.command == "all" else (args.command,)
        status = run_pipeline(cfg, stages)
    except ConfigValidationError as exc:
        print(f"convprobe: configuration error at {exc}", file=sys.stderr)
        return 2
    except StageDependencyError as exc:
        print(f"convprobe: {exc}", file=sys.stderr)
        return 3
    except (DatasetFormatError, CheckpointError, ValueError, RuntimeError, OSError) as exc:
        print(f"convprobe: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    return status


if __name__ == "__main__":
    sys.exit(main())
