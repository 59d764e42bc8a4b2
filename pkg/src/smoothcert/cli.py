"""Command-line entry point: ``smoothcert {gen-data,train,certify,evaluate}``.

Every command writes a ``<output>.manifest.json`` next to its main output
with the resolved parameters, seed, file checksums and timing.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 numerical failure.
"""

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .data import make_blobs, read_dataset_csv, write_dataset_csv
from .evaluation import (
    DEFAULT_RADII,
    METHODS,
    certify_dataset,
    curve_from_results,
    read_results_csv,
    write_curve_csv,
    write_paired_csv,
    write_results_csv,
)
from .models import MLP, load_model, save_model
from .rng import stream
from .smoothing import DEFAULT_GRID, CertificationParams, SmoothingConfig
from .training import AdversarialConfig, TrainConfig, train

log = logging.getLogger("smoothcert")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class UsageError(Exception):
    pass


class InputFileError(Exception):
    pass


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(output: Path, command: str, argv: Sequence[str], params: dict, seed,
                   inputs: Sequence[Path], outputs: Sequence[Path], started: float) -> Path:
    doc = {
        "command": command,
        "argv": list(argv),
        "version": __version__,
        "params": params,
        "seed": seed,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "wall_seconds": round(time.time() - started, 3),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    path = output.with_name(output.name + ".manifest.json")
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


def parse_float_list(text: str, what: str) -> List[float]:
    """Comma list; ``a,b,...,z`` expands the arithmetic progression a, b, ..., z."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        if "..." in parts:
            i = parts.index("...")
            if i != 2 or len(parts) != 4:
                raise UsageError(f"{what}: use 'a,b,...,z' for a progression")
            a, b, z = float(parts[0]), float(parts[1]), float(parts[3])
            step = b - a
            if step <= 0:
                raise UsageError(f"{what}: progression must increase")
            count = int(round((z - a) / step))
            values = [round(a + j * step, 12) for j in range(count + 1)]
        else:
            values = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"{what}: cannot parse {text!r}") from None
    if not values:
        raise UsageError(f"{what}: empty list")
    return values


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smoothcert", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a Gaussian-blob dataset CSV")
    g.add_argument("--classes", type=int, default=2)
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--per-class", type=int, default=200)
    g.add_argument("--separation", type=float, default=6.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--threads", type=_positive_int, default=1, help="accepted; generation is serial")

    t = sub.add_parser("train", help="train an MLP base classifier")
    t.add_argument("--data", type=Path, required=True)
    t.add_argument("--out", type=Path, required=True, help="model JSON path")
    t.add_argument("--log", type=Path, help="training log CSV (default: <out>.log.csv)")
    t.add_argument("--hidden", default="64,64", help="hidden layer widths")
    t.add_argument("--classes", type=int, help="number of classes (default: max label + 1)")
    t.add_argument("--sigma", type=float, required=True)
    t.add_argument("--lambda", dest="lam", type=float, default=0.0)
    t.add_argument("--k", type=int, default=1)
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--lr", type=float, default=0.1)
    t.add_argument("--momentum", type=float, default=0.9)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--lr-decay-factor", type=float, default=0.1)
    t.add_argument("--lr-decay-every", type=int, default=0, help="epochs per decay step; 0 = constant")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--adv-steps", type=int)
    t.add_argument("--adv-eps", type=float)
    t.add_argument("--adv-step-size", type=float, help="default 2*eps/steps")
    t.add_argument("--single-perturbation-lper", action="store_true",
                   help="cross-entropy term from one random perturbation of the k")
    t.add_argument("--threads", type=_positive_int, default=1, help="accepted; training is serial")

    c = sub.add_parser("certify", help="certify a dataset with CERTIFY and/or T-CERTIFY")
    c.add_argument("--model", type=Path, required=True)
    c.add_argument("--data", type=Path, required=True)
    c.add_argument("--out", type=Path, required=True, help="per-sample results CSV")
    c.add_argument("--method", choices=("certify", "tcertify", "both"), default="both")
    c.add_argument("--sigma", type=float, required=True)
    c.add_argument("--n0", type=int, default=100)
    c.add_argument("--n", type=int, default=100_000)
    c.add_argument("--alpha", type=float, default=0.001)
    c.add_argument("--grid", default=",".join(str(t) for t in DEFAULT_GRID),
                   help="fractions t of alpha for the top-class budget; must include 1.0")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--max-samples", type=int)
    c.add_argument("--threads", type=_positive_int, default=1)
    c.add_argument("--independent", action="store_true",
                   help="with --method both, give CERTIFY its own noise draw")
    c.add_argument("--no-timing", action="store_true",
                   help="write elapsed_ms as 0 so reruns are byte-identical")

    e = sub.add_parser("evaluate", help="aggregate results into certified-accuracy curves")
    e.add_argument("--results", type=Path, required=True)
    e.add_argument("--out", type=Path, required=True, help="curve CSV")
    e.add_argument("--radii", default=",".join(repr(r) for r in DEFAULT_RADII))
    e.add_argument("--figure", type=Path, help="figure path (default: <out> with .png)")
    e.add_argument("--no-figure", action="store_true")
    e.add_argument("--threads", type=_positive_int, default=1, help="accepted; aggregation is serial")
    return parser


def cmd_gen_data(args, argv, started) -> int:
    if args.classes < 2 or args.dim < 1 or args.per_class < 1 or args.separation < 0:
        raise UsageError("need --classes >= 2, --dim >= 1, --per-class >= 1, --separation >= 0")
    ds = make_blobs(args.classes, args.dim, args.per_class, args.separation,
                    stream(args.seed, "data"))
    write_dataset_csv(ds, args.out)
    params = {"classes": args.classes, "dim": args.dim, "per_class": args.per_class,
              "separation": args.separation}
    write_manifest(args.out, "gen-data", argv, params, args.seed, [], [args.out], started)
    return EXIT_OK


def _read_dataset(path: Path):
    try:
        return read_dataset_csv(path)
    except ValueError as exc:
        raise InputFileError(str(exc)) from None


def cmd_train(args, argv, started) -> int:
    ds = _read_dataset(args.data)
    try:
        hidden = [int(h) for h in args.hidden.split(",") if h.strip()]
    except ValueError:
        raise UsageError(f"--hidden: cannot parse {args.hidden!r}") from None
    if any(h < 1 for h in hidden):
        raise UsageError("--hidden widths must be >= 1")
    num_classes = args.classes if args.classes is not None else int(ds.y.max()) + 1
    if num_classes < 2 or ds.y.max() >= num_classes:
        raise UsageError(f"labels need 2 <= classes, got classes={num_classes}")
    adv = None
    if (args.adv_steps is None) != (args.adv_eps is None):
        raise UsageError("--adv-steps and --adv-eps must be given together")
    try:
        if args.adv_steps is not None:
            adv = AdversarialConfig(args.adv_steps, args.adv_eps, args.adv_step_size)
        cfg = TrainConfig(sigma=args.sigma, lam=args.lam, k=args.k, batch_size=args.batch_size,
                          epochs=args.epochs, lr=args.lr, momentum=args.momentum,
                          lr_decay_factor=args.lr_decay_factor,
                          lr_decay_every=args.lr_decay_every, seed=args.seed, adversarial=adv,
                          single_perturbation_lper=args.single_perturbation_lper)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    model = MLP.init([ds.dim] + hidden + [num_classes], stream(args.seed, "init"))
    model, history = train(model, ds.X, ds.y, cfg)
    if not all(np.isfinite(p).all() for p in model.params):
        raise FloatingPointError("training diverged (non-finite parameters)")
    save_model(model, args.out)
    log_path = args.log or args.out.with_name(args.out.name + ".log.csv")
    with open(log_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "l_per", "l_adre", "total", "train_acc"])
        for h in history:
            w.writerow([h.epoch, repr(h.l_per), repr(h.l_adre), repr(h.total), repr(h.train_acc)])
    params = {"hidden": hidden, "classes": num_classes, "sigma": cfg.sigma, "lambda": cfg.lam,
              "k": cfg.k, "batch_size": cfg.batch_size, "epochs": cfg.epochs, "lr": cfg.lr,
              "momentum": cfg.momentum, "lr_decay_factor": cfg.lr_decay_factor,
              "lr_decay_every": cfg.lr_decay_every,
              "single_perturbation_lper": cfg.single_perturbation_lper,
              "adversarial": None if adv is None else
              {"steps": adv.steps, "epsilon": adv.epsilon, "step_size": adv.alpha}}
    write_manifest(args.out, "train", argv, params, args.seed, [args.data],
                   [args.out, log_path], started)
    if history:
        log.info("final epoch: total=%.4f train_acc=%.3f", history[-1].total, history[-1].train_acc)
    return EXIT_OK


def cmd_certify(args, argv, started) -> int:
    grid = parse_float_list(args.grid, "--grid")
    try:
        cfg = SmoothingConfig(args.sigma)
        params = CertificationParams(args.n0, args.n, args.alpha, tuple(grid))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.max_samples is not None and args.max_samples < 1:
        raise UsageError("--max-samples must be >= 1")
    try:
        model = load_model(args.model)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputFileError(f"{args.model}: invalid model file ({exc})") from None
    ds = _read_dataset(args.data)
    if ds.dim != model.input_dim:
        raise UsageError(f"data dimension {ds.dim} != model input dimension {model.input_dim}")
    if args.max_samples is not None:
        ds = ds.head(args.max_samples)
    methods = METHODS if args.method == "both" else (args.method,)
    results = certify_dataset(model, ds.X, ds.y, cfg, params, args.seed, methods,
                              threads=args.threads, shared=not args.independent,
                              timing=not args.no_timing)
    rows = [r for m in methods for r in results[m]]
    write_results_csv(rows, args.out)
    outputs = [args.out]
    if args.method == "both":
        paired = args.out.with_name(args.out.stem + ".paired.csv")
        write_paired_csv(results["certify"], results["tcertify"], paired)
        outputs.append(paired)
    run_params = {"method": args.method, "sigma": cfg.sigma, "n0": params.n0, "n": params.n,
                  "alpha": params.alpha, "grid": list(params.grid),
                  "max_samples": args.max_samples, "shared_counts": not args.independent,
                  "threads": args.threads, "timing": not args.no_timing}
    write_manifest(args.out, "certify", argv, run_params, args.seed, [args.model, args.data],
                   outputs, started)
    return EXIT_OK


def cmd_evaluate(args, argv, started) -> int:
    radii = parse_float_list(args.radii, "--radii")
    if any(b < a for a, b in zip(radii, radii[1:])) or radii[0] < 0:
        raise UsageError("--radii must be non-negative and ascending")
    try:
        results = read_results_csv(args.results)
    except ValueError as exc:
        raise InputFileError(str(exc)) from None
    if not results:
        raise UsageError(f"{args.results}: no results to evaluate")
    curves = []
    for method in dict.fromkeys(r.method for r in results):
        subset = [r for r in results if r.method == method]
        curves.append(curve_from_results(subset, radii, {"method": method}))
    write_curve_csv(curves, args.out)
    outputs = [args.out]
    if not args.no_figure:
        from .plotting import plot_certified_accuracy

        fig_path = args.figure or args.out.with_suffix(".png")
        plot_certified_accuracy(curves, fig_path)
        outputs.append(fig_path)
    write_manifest(args.out, "evaluate", argv, {"radii": radii}, None, [args.results], outputs,
                   started)
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "certify": cmd_certify,
            "evaluate": cmd_evaluate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        return COMMANDS[args.command](args, argv, started)
    except UsageError as exc:
        print(f"smoothcert {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputFileError as exc:
        print(f"smoothcert {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"smoothcert {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ArithmeticError as exc:
        print(f"smoothcert {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
