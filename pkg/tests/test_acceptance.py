"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or directly as a script.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from smoothcert.bounds import SignificanceSplit, bound_pair, runnerup_tail_sum, runnerup_upper
from smoothcert.cli import main as cli_main
from smoothcert.data import make_blobs
from smoothcert.evaluation import certify_dataset, compare_certifiers
from smoothcert.models import MLP, LinearClassifier
from smoothcert.rng import stream
from smoothcert.smoothing import (
    CertificationParams,
    SmoothingConfig,
    certify_baseline_from_counts,
    t_certify_from_counts,
)
from smoothcert.special import binom_tail_ge, binom_tail_le, std_normal_cdf, std_normal_quantile
from smoothcert.training import AdversarialConfig, TrainConfig, loss_and_grad, pgd_attack, train

from oracles import binom_pmf


def _report(capsys, number, name, ok, detail, elapsed):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name} ({detail}; {elapsed:.1f}s)"
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)
    return ok


# 1 ---------------------------------------------------------------------------

def criterion_1():
    ps = np.linspace(1e-6, 1 - 1e-6, 10_000)
    worst_q = max(abs(std_normal_cdf(std_normal_quantile(float(p))) - p) for p in ps)
    worst_b = 0.0
    for n in range(1, 31):
        for j in range(21):
            p = Fraction(j, 20)
            acc = Fraction(0)
            for k in range(n + 1):
                acc += binom_pmf(k, n, p)
                worst_b = max(worst_b, abs(binom_tail_le(k, n, float(p)) - float(acc)))
    ok = worst_q < 1e-9 and worst_b < 1e-10
    return ok, f"round trip {worst_q:.1e} < 1e-9, binomial cdf {worst_b:.1e} < 1e-10"


# 2 ---------------------------------------------------------------------------

COVERAGE_VECTORS = ([0.6, 0.3, 0.1], [0.45, 0.35, 0.2], [0.9, 0.05, 0.05])


def criterion_2():
    alpha, n, draws = 0.05, 1000, 2000
    split = SignificanceSplit(alpha, alpha / 2)
    freqs = []
    for v, probs in enumerate(COVERAGE_VECTORS):
        rng = stream(0, "coverage", v)
        top = int(np.argmax(probs))
        p_b = max(p for i, p in enumerate(probs) if i != top)
        misses = 0
        for counts in rng.multinomial(n, probs, size=draws):
            bp = bound_pair(counts, top, split)
            misses += bp.p_lower > probs[top] or bp.p_upper < p_b
        freqs.append(misses / draws)
    return max(freqs) <= 0.07, "miss rates " + ", ".join(f"{f:.4f}" for f in freqs) + " <= 0.07"


# 3 ---------------------------------------------------------------------------

def criterion_3():
    d, inputs, sigma = 10, 500, 0.5
    rng = stream(0, "soundness")
    w = rng.standard_normal(d)
    b = float(rng.normal())
    X = rng.standard_normal((inputs, d)) / np.linalg.norm(w) * 2.0
    model = LinearClassifier(w, b)
    margins = X @ w + b
    y = (margins > 0).astype(np.int64)
    true_r = np.abs(margins) / np.linalg.norm(w)
    params = CertificationParams(n0=100, n=10_000, alpha=0.001)
    res = certify_dataset(model, X, y, SmoothingConfig(sigma), params, seed=1, shared=False,
                          timing=False, threads=4)
    parts, ok = [], True
    for method, rows in res.items():
        bad = sum((not r.abstain) and (r.predicted != y[r.idx] or r.radius > true_r[r.idx])
                  for r in rows)
        certified = sum(not r.abstain for r in rows)
        parts.append(f"{method} {bad} violations / {certified} certified")
        ok &= bad <= 2
    return ok, ", ".join(parts)


# 4 ---------------------------------------------------------------------------

def criterion_4():
    rng = stream(0, "dominance")
    compared = worse = 0
    nondegenerate = strictly = 0
    identical = True
    for _ in range(1000):
        C = int(rng.choice([2, 5, 10]))
        n = int(rng.choice([1000, 100_000]))
        p_top = rng.uniform(0.5, 0.999)
        probs = np.concatenate([[p_top], rng.dirichlet(np.full(C - 1, 0.5)) * (1 - p_top)])
        counts = rng.multinomial(n, probs)
        top = int(np.argmax(counts))
        sigma = float(rng.choice([0.12, 0.25, 0.5, 1.0]))
        base = certify_baseline_from_counts(counts, top, sigma, 0.001)
        one = t_certify_from_counts(counts, top, sigma, 0.001, grid=(1.0,))
        identical &= base.status == one.status and base.radius == one.radius
        if not base.certified:
            continue
        tc = t_certify_from_counts(counts, top, sigma, 0.001)
        compared += 1
        worse += not (tc.certified and tc.radius >= base.radius)
        if np.count_nonzero(np.delete(counts, top)) >= 2:
            nondegenerate += 1
            strictly += tc.radius > base.radius
    frac = strictly / max(nondegenerate, 1)
    ok = worse == 0 and frac > 0.30 and identical
    return ok, (f"{compared - worse}/{compared} dominated, strict {frac:.1%} of {nondegenerate} "
                f"non-degenerate, grid {{1.0}} bit-identical: {identical}")


# 5 ---------------------------------------------------------------------------

def criterion_5():
    rng = stream(0, "consistency")
    checked = failures = 0
    for _ in range(200):
        C = int(rng.integers(2, 8))
        n = int(rng.choice([50, 1000, 100_000]))
        counts = rng.multinomial(n, rng.dirichlet(np.full(C, 0.7)))
        top = int(np.argmax(counts))
        alpha = float(rng.choice([0.001, 0.01, 0.05]))
        split = SignificanceSplit(alpha, alpha * float(rng.uniform(0.05, 0.95)))
        bp = bound_pair(counts, top, split)
        k = int(counts[top])
        if k > 0:
            checked += 1
            ok = binom_tail_ge(k, n, bp.p_lower) <= split.alpha_prime + 1e-9
            ok &= binom_tail_ge(k, n, bp.p_lower + 1e-6) > split.alpha_prime
            failures += not ok
        rest = np.delete(counts, top)
        raw = runnerup_upper(rest, n, split.remaining)
        if raw < 1.0:
            checked += 1
            ok = runnerup_tail_sum(rest, n, raw) <= split.remaining + 1e-9
            ok &= runnerup_tail_sum(rest, n, raw - 1e-6) > split.remaining
            ok &= bp.p_upper == min(raw, 1.0 - bp.p_lower)
            failures += not ok
    return failures == 0, f"{checked - failures}/{checked} bounds satisfy and are tight"


# 6 ---------------------------------------------------------------------------

def _rel_fd_error(model, X, y, noise, lam, h=1e-6):
    _, grads, _ = loss_and_grad(model, X, y, noise, lam)
    ana, num = [], []
    for p, g in zip(model.params, grads):
        flat = p.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss_and_grad(model, X, y, noise, lam)[0].total
            flat[i] = old - h
            down = loss_and_grad(model, X, y, noise, lam)[0].total
            flat[i] = old
            num.append((up - down) / (2 * h))
        ana.extend(g.reshape(-1))
    ana, num = np.array(ana), np.array(num)
    return np.linalg.norm(ana - num) / max(np.linalg.norm(ana), np.linalg.norm(num), 1e-12)


def criterion_6():
    worst, cases = 0.0, 0
    adv = AdversarialConfig(steps=2, epsilon=0.5)
    for m in range(3):
        rng = stream(0, "gradcheck", m)
        model = MLP.init([3, 10, 8, 4], rng)
        for b in model.biases:
            b += 0.3 * rng.standard_normal(b.shape)
        for _ in range(5):
            X = rng.standard_normal((8, 3))
            y = rng.integers(0, 4, size=8)
            noise = rng.standard_normal((8, 4, 3)) * 0.5
            for lam in (0.0, 0.3):
                for adversarial in (False, True):
                    # adversarial points are held fixed for the parameter gradient
                    Xb = pgd_attack(model, X, y, noise, lam, adv) if adversarial else X
                    worst = max(worst, _rel_fd_error(model, Xb, y, noise, lam))
                    cases += 1
    return worst < 1e-4, f"max relative error {worst:.1e} < 1e-4 over {cases} cases"


# 7 ---------------------------------------------------------------------------

def criterion_7():
    ds = make_blobs(3, 2, 100, 3.0, stream(0, "pgd-data"))
    eps = 0.5
    cfg = TrainConfig(sigma=0.5, lam=0.3, k=4, epochs=5, batch_size=32, lr=0.05, seed=0,
                      adversarial=AdversarialConfig(steps=4, epsilon=eps))
    seen = {"iterates": 0, "violations": 0, "max": 0.0}

    def check(t, X, X0):
        norms = np.linalg.norm(X - X0, axis=1)
        seen["iterates"] += norms.size
        seen["violations"] += int(np.sum(norms > eps + 1e-9))
        seen["max"] = max(seen["max"], float(norms.max()))

    train(MLP.init([2, 16, 3], stream(0, "init")), ds.X, ds.y, cfg, on_attack_step=check)
    ok = seen["violations"] == 0 and seen["iterates"] > 0
    return ok, (f"{seen['violations']} violations over {seen['iterates']} iterates, "
                f"max distance {seen['max']:.12f} <= {eps}")


# 8 ---------------------------------------------------------------------------

CURVE_RADII = (0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)


def _toy_run(train_ds, test_ds, sigma, lam, epochs=20):
    cfg = TrainConfig(sigma=sigma, lam=lam, k=8, epochs=epochs, batch_size=64, lr=0.05,
                      lr_decay_every=epochs // 2, lr_decay_factor=0.1, seed=0)
    model, _ = train(MLP.init([2, 64, 64, 3], stream(0, "init")), train_ds.X, train_ds.y, cfg)
    params = CertificationParams(n0=100, n=10_000, alpha=0.001)
    return compare_certifiers(model, test_ds.X, test_ds.y, SmoothingConfig(sigma), params,
                              seed=1, radii=CURVE_RADII, threads=4)


def _mean_correct_radius(rows):
    radii = [r.radius for r in rows if r.correct]
    return float(np.mean(radii)) if radii else 0.0


def criterion_8():
    train_ds = make_blobs(3, 2, 334, 3.0, stream(0, "train")).head(1000)
    test_ds = make_blobs(3, 2, 167, 3.0, stream(0, "test")).head(500)
    basic = _toy_run(train_ds, test_ds, 0.5, 0.0)
    adre = _toy_run(train_ds, test_ds, 0.5, 0.3)
    acc_b, acc_a = basic.curves["certify"].at(0.5), adre.curves["certify"].at(0.5)
    rad_b, rad_a = _mean_correct_radius(basic.certify), _mean_correct_radius(adre.certify)
    ok_a = acc_a >= acc_b - 0.02 and rad_a >= rad_b

    runs = {0.25: _toy_run(train_ds, test_ds, 0.25, 0.0), 0.5: basic,
            1.0: _toy_run(train_ds, test_ds, 1.0, 0.0)}
    pointwise = all(c.curves["tcertify"].at(r) >= c.curves["certify"].at(r)
                    for c in runs.values() for r in CURVE_RADII)
    gaps = {s: float(c.deltas.mean()) for s, c in runs.items()}
    ok_b = pointwise and gaps[1.0] > gaps[0.25]
    detail = (f"(a) acc@0.5 {acc_a:.3f} (lambda 0.3) vs {acc_b:.3f} (lambda 0), mean radius "
              f"{rad_a:.4f} vs {rad_b:.4f}; (b) pointwise {pointwise}, mean gap "
              + ", ".join(f"sigma {s}: {g:.4f}" for s, g in gaps.items()))
    return ok_a and ok_b, detail


# 9 ---------------------------------------------------------------------------

def criterion_9(tmp_path):
    outputs = {}
    for run, threads in enumerate(("1", "1", "8", "8")):
        d = tmp_path / f"run{run}"
        d.mkdir()
        codes = [
            cli_main(["gen-data", "--classes", "3", "--per-class", "30", "--separation", "4",
                      "--seed", "5", "--out", str(d / "data.csv"), "--threads", threads]),
            cli_main(["train", "--data", str(d / "data.csv"), "--out", str(d / "model.json"),
                      "--sigma", "0.5", "--lambda", "0.3", "--k", "4", "--epochs", "3",
                      "--hidden", "16", "--adv-steps", "2", "--adv-eps", "0.3", "--seed", "5",
                      "--threads", threads]),
            cli_main(["certify", "--model", str(d / "model.json"), "--data", str(d / "data.csv"),
                      "--out", str(d / "results.csv"), "--sigma", "0.5", "--n0", "50",
                      "--n", "2000", "--seed", "5", "--no-timing", "--threads", threads]),
            cli_main(["evaluate", "--results", str(d / "results.csv"), "--out",
                      str(d / "curve.csv"), "--no-figure", "--threads", threads]),
        ]
        if any(codes):
            return False, f"exit codes {codes}"
        for name in ("data.csv", "model.json", "model.json.log.csv", "results.csv",
                     "results.paired.csv", "curve.csv"):
            outputs.setdefault(name, set()).add((d / name).read_bytes())
    differing = [k for k, v in outputs.items() if len(v) != 1]
    return not differing, (f"{len(outputs)} outputs x 4 runs (threads 1, 1, 8, 8); "
                           f"differing: {differing or 'none'}")


# ---------------------------------------------------------------------------

CRITERIA = [
    (1, "special-function fidelity", criterion_1, 10),
    (2, "Clopper-Pearson coverage", criterion_2, 30),
    (3, "soundness against the linear oracle", criterion_3, 300),
    (4, "dominance of T-CERTIFY", criterion_4, 60),
    (5, "bound consistency", criterion_5, None),
    (6, "gradient correctness", criterion_6, 60),
    (7, "PGD feasibility", criterion_7, None),
    (8, "directional trends at toy scale", criterion_8, 900),
    (9, "CLI determinism across thread counts", criterion_9, None),
]


def _run(number, capsys, *args):
    _, name, fn, budget = CRITERIA[number - 1]
    t0 = time.perf_counter()
    ok, detail = fn(*args)
    elapsed = time.perf_counter() - t0
    if budget is not None:
        detail += f"; budget {budget}s"
        ok = ok and elapsed < budget
    return _report(capsys, number, name, ok, detail, elapsed)


@pytest.mark.parametrize("number", [1, 2, 3, 4, 5, 6, 7])
def test_criterion(number, capsys):
    assert _run(number, capsys)


@pytest.mark.slow
def test_criterion_8(capsys):
    assert _run(8, capsys)


def test_criterion_9(capsys, tmp_path):
    assert _run(9, capsys, tmp_path)


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    results = []
    for number, *_ in CRITERIA:
        if number == 9:
            with tempfile.TemporaryDirectory() as tmp:
                results.append(_run(9, None, Path(tmp)))
        else:
            results.append(_run(number, None))
    sys.exit(0 if all(results) else 1)
