"""Certified-accuracy evaluation and the paired CERTIFY / T-CERTIFY comparison.

Certified accuracy at radius r is the fraction of inputs certified with the
correct label and radius >= r. Abstentions and wrong labels fail at every r.
"""

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .rng import stream
from .smoothing import (
    CertificationOutcome,
    CertificationParams,
    SmoothingConfig,
    certify_baseline_from_counts,
    draw_counts,
    t_certify_from_counts,
)

__all__ = [
    "DEFAULT_RADII",
    "RESULT_FIELDS",
    "CURVE_FIELDS",
    "PAIRED_FIELDS",
    "SampleResult",
    "CertifiedAccuracyCurve",
    "Comparison",
    "certified_accuracy",
    "curve_from_results",
    "certify_dataset",
    "compare_certifiers",
    "write_results_csv",
    "read_results_csv",
    "write_curve_csv",
    "read_curve_csv",
    "write_paired_csv",
]

DEFAULT_RADII = tuple(0.25 * i for i in range(13))
RESULT_FIELDS = ("idx", "true_label", "predicted", "radius", "correct", "abstain",
                 "method", "elapsed_ms")
CURVE_FIELDS = ("radius", "accuracy", "method")
PAIRED_FIELDS = ("idx", "true_label", "r_certify", "r_tcertify", "delta")
METHODS = ("certify", "tcertify")


@dataclass(frozen=True)
class SampleResult:
    idx: int
    true_label: int
    predicted: int
    radius: float
    correct: bool
    abstain: bool
    method: str
    elapsed_ms: float = 0.0

    @classmethod
    def from_outcome(cls, idx: int, true_label: int, outcome: CertificationOutcome,
                     method: str, elapsed_ms: float = 0.0) -> "SampleResult":
        abstain = not outcome.certified
        return cls(idx, int(true_label), int(outcome.label), float(outcome.radius),
                   (not abstain) and outcome.label == true_label, abstain, method, elapsed_ms)


@dataclass
class CertifiedAccuracyCurve:
    radii: List[float]
    accuracy: List[float]
    metadata: Dict = field(default_factory=dict)

    def at(self, r: float) -> float:
        return self.accuracy[self.radii.index(r)]


def certified_accuracy(outcomes: Sequence[CertificationOutcome], labels: Sequence[int],
                       radii: Sequence[float] = DEFAULT_RADII,
                       metadata: Optional[Dict] = None) -> CertifiedAccuracyCurve:
    if len(outcomes) != len(labels):
        raise ValueError(f"{len(outcomes)} outcomes but {len(labels)} labels")
    radii = [float(r) for r in radii]
    if any(b < a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be sorted ascending")
    total = len(outcomes)
    ok = [o.radius for o, y in zip(outcomes, labels) if o.certified and o.label == y]
    acc = [sum(r >= t for r in ok) / total if total else 0.0 for t in radii]
    return CertifiedAccuracyCurve(radii, acc, dict(metadata or {}))


def curve_from_results(results: Sequence[SampleResult], radii: Sequence[float] = DEFAULT_RADII,
                       metadata: Optional[Dict] = None) -> CertifiedAccuracyCurve:
    outcomes = [CertificationOutcome("certified" if not r.abstain else "abstain",
                                     r.predicted, r.radius) for r in results]
    return certified_accuracy(outcomes, [r.true_label for r in results], radii, metadata)


@dataclass
class Comparison:
    certify: List[SampleResult]
    tcertify: List[SampleResult]
    curves: Dict[str, CertifiedAccuracyCurve]

    @property
    def deltas(self) -> np.ndarray:
        return np.array([b.radius - a.radius for a, b in zip(self.certify, self.tcertify)])


def _map(fn, items, threads: int) -> list:
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _certify_one(model, x, cfg, params, seed, idx, methods, shared, timing):
    def draw(name):
        t0 = time.perf_counter()
        top, counts = draw_counts(model, x, cfg.sigma, params, stream(seed, name, idx))
        return top, counts, time.perf_counter() - t0

    common = draw("certify")
    out = {}
    for method in methods:
        top, counts, t_draw = common
        if method == "certify" and not shared and len(methods) > 1:
            top, counts, t_draw = draw("certify-independent")
        t0 = time.perf_counter()
        if method == "certify":
            o = certify_baseline_from_counts(counts, top, cfg.sigma, params.alpha)
        else:
            o = t_certify_from_counts(counts, top, cfg.sigma, params.alpha, params.grid)
        elapsed = (t_draw + time.perf_counter() - t0) * 1e3 if timing else 0.0
        out[method] = (o, elapsed)
    return out


def certify_dataset(model, X: np.ndarray, y: np.ndarray, cfg: SmoothingConfig,
                    params: CertificationParams, seed: int, methods: Sequence[str] = METHODS,
                    threads: int = 1, shared: bool = True,
                    timing: bool = True) -> Dict[str, List[SampleResult]]:
    """Certify every row of ``X`` with each method; rows keep input order.

    Sample ``i`` draws its noise from ``stream(seed, "certify", i)``, so
    results do not depend on ``threads``. With ``shared`` (default) all
    methods see the same counts; otherwise CERTIFY uses its own draw.
    """
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    X = np.asarray(X, dtype=np.float64)

    def work(i):
        return _certify_one(model, X[i], cfg, params, seed, i, methods, shared, timing)

    per_sample = _map(work, range(X.shape[0]), threads)
    return {m: [SampleResult.from_outcome(i, y[i], res[m][0], m, res[m][1])
                for i, res in enumerate(per_sample)]
            for m in methods}


def compare_certifiers(model, X: np.ndarray, y: np.ndarray, cfg: SmoothingConfig,
                       params: CertificationParams, seed: int,
                       radii: Sequence[float] = DEFAULT_RADII, threads: int = 1,
                       shared: bool = True) -> Comparison:
    results = certify_dataset(model, X, y, cfg, params, seed, METHODS, threads, shared)
    meta = {"sigma": cfg.sigma, "n0": params.n0, "n": params.n, "alpha": params.alpha,
            "seed": seed}
    curves = {m: curve_from_results(results[m], radii, dict(meta, method=m)) for m in METHODS}
    return Comparison(results["certify"], results["tcertify"], curves)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_results_csv(results: Sequence[SampleResult], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_FIELDS)
        for r in results:
            w.writerow([r.idx, r.true_label, r.predicted, _fmt(r.radius), int(r.correct),
                        int(r.abstain), r.method, f"{r.elapsed_ms:.3f}"])


def read_results_csv(path) -> List[SampleResult]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != RESULT_FIELDS:
            raise ValueError(f"{path}: expected header {','.join(RESULT_FIELDS)}")
        out = []
        for line, row in enumerate(reader, start=2):
            try:
                out.append(SampleResult(int(row["idx"]), int(row["true_label"]),
                                        int(row["predicted"]), float(row["radius"]),
                                        bool(int(row["correct"])), bool(int(row["abstain"])),
                                        row["method"], float(row["elapsed_ms"])))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line}: malformed row ({exc})") from None
    return out


def write_curve_csv(curves: Sequence[CertifiedAccuracyCurve], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_FIELDS)
        for c in curves:
            method = c.metadata.get("method", "")
            for r, a in zip(c.radii, c.accuracy):
                w.writerow([_fmt(r), _fmt(a), method])


def read_curve_csv(path) -> Dict[str, CertifiedAccuracyCurve]:
    curves: Dict[str, CertifiedAccuracyCurve] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            c = curves.setdefault(row["method"], CertifiedAccuracyCurve(
                [], [], {"method": row["method"]}))
            c.radii.append(float(row["radius"]))
            c.accuracy.append(float(row["accuracy"]))
    return curves


def write_paired_csv(cmp_certify: Sequence[SampleResult], cmp_tcertify: Sequence[SampleResult],
                     path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PAIRED_FIELDS)
        for a, b in zip(cmp_certify, cmp_tcertify):
            w.writerow([a.idx, a.true_label, _fmt(a.radius), _fmt(b.radius),
                        _fmt(b.radius - a.radius)])
