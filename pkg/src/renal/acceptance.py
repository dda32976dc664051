"""Executable acceptance checks, one function per criterion.

Each check returns a :class:`CriterionResult`; ``run_all`` drives them for the
``renal acceptance`` command and the test suite.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from renal import generators as gen
from renal.baselines import MmdConfig, mmd_windows_test, split_windows
from renal.chi2 import chi_square_cdf, chi_square_quantile
from renal.embedding import gradient_check, init_model
from renal.gof import TransitionTable, chi_square_statistic, decide, transition_counts
from renal.harness import ExperimentConfig, run_experiment, run_lambda_ablation, wilson_interval
from renal.rng import make_rng
from renal.sequence import ObservationSequence


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] criterion {self.number:2d} {self.title}: {self.detail} ({self.seconds:.1f}s)"


def _timed(number, title):
    def wrap(fn):
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            passed, detail = fn(*args, **kwargs)
            return CriterionResult(number, title, bool(passed), detail, time.perf_counter() - t0)
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


@_timed(1, "statistic oracle")
def criterion_1():
    t0 = TransitionTable(np.array([[3, 1], [2, 2]]))
    t1 = TransitionTable(np.array([[2, 2], [1, 3]]))
    w, _ = chi_square_statistic(t0, t1)
    same, _ = chi_square_statistic(t0, t0)
    err = abs(w - 16 / 15)
    return err <= 1e-12 and same == 0.0, f"W={w!r} (error {err:.1e}), identical tables W={same!r}"


@_timed(2, "chi-square plumbing")
def criterion_2():
    q = chi_square_quantile(0.95, 2)
    worst = 0.0
    for dof in (1, 2, 6, 90):
        for x in (0.5, 2.0, 10.0):
            worst = max(worst, abs(chi_square_quantile(chi_square_cdf(x, dof), dof) - x))
    ok = abs(q - 5.991) <= 1e-3 and worst < 1e-6
    return ok, f"q95(2)={q:.6f}, worst round-trip error {worst:.1e}"


CALIBRATION_CHAIN = np.array([[0.5, 0.3, 0.2], [0.2, 0.6, 0.2], [0.3, 0.3, 0.4]])


def simulate_chains(P: np.ndarray, n_chains: int, length: int, seed: int) -> np.ndarray:
    """``n_chains`` independent paths of a finite Markov chain started at stationarity."""
    rng = make_rng(seed, 3)
    evals, evecs = np.linalg.eig(P.T)
    pi = np.real(evecs[:, np.argmin(np.abs(evals - 1))])
    pi = pi / pi.sum()
    cum = np.cumsum(P, axis=1)
    out = np.empty((n_chains, length), dtype=np.int64)
    out[:, 0] = np.searchsorted(np.cumsum(pi), rng.random(n_chains), side="right")
    for i in range(1, length):
        u = rng.random(n_chains)
        out[:, i] = (u[:, None] >= cum[out[:, i - 1]]).sum(axis=1)
    return np.minimum(out, P.shape[0] - 1)


@_timed(3, "null calibration")
def criterion_3(pairs: int = 1000, length: int = 5000, seed: int = 0):
    paths = simulate_chains(CALIBRATION_CHAIN, 2 * pairs, length, seed)
    ws, rejects = [], 0
    for k in range(pairs):
        t0 = transition_counts(paths[2 * k], 3)
        t1 = transition_counts(paths[2 * k + 1], 3)
        w, occ = chi_square_statistic(t0, t1)
        ws.append(w)
        rejects += decide(w, occ, 0.05).reject
    rate = rejects / pairs
    ks = stats.kstest(ws, lambda x: chi_square_cdf_vec(x, 6)).statistic
    return 0.03 <= rate <= 0.08 and ks < 0.05, f"rejection rate {rate:.3f}, KS distance to chi2(6) {ks:.4f}"


def chi_square_cdf_vec(x, dof):
    return np.array([chi_square_cdf(float(v), dof) for v in np.atleast_1d(x)])


@_timed(4, "gradient correctness")
def criterion_4(seed: int = 0):
    rng = make_rng(seed, 4)
    setups = [("regular", 1, 1), ("regular", 2, 3), ("event", 1, 2), ("event", 3, 3), ("regular", 2, 2)]
    worst = 0.0
    for i, (kind, d, hidden) in enumerate(setups):
        n = 12
        t = np.cumsum(rng.exponential(1.0, n)) if kind == "event" else np.arange(n, dtype=float)
        seq = ObservationSequence(t, rng.standard_normal((n, d)), kind)
        model = init_model(kind, d, hidden, seed=1000 + i)
        # move away from the all-zero biases so every parameter gets signal
        theta = model.theta + 0.3 * rng.standard_normal(model.theta.size)
        model = replace(model, theta=theta)
        worst = max(worst, gradient_check(model, seq, 1e-5))
    return worst < 1e-4, f"max relative error {worst:.2e} over {len(setups)} models"


def arma_autocorrelation(ar, ma, lag: int, terms: int = 5000) -> float:
    """Autocorrelation from the truncated moving-average representation."""
    psi = np.zeros(terms)
    psi[0] = 1.0
    for j in range(1, terms):
        acc = ma[j - 1] if j - 1 < len(ma) else 0.0
        for i, a in enumerate(ar, start=1):
            if j - i >= 0:
                acc += a * psi[j - i]
        psi[j] = acc
    return float(np.dot(psi[:-lag], psi[lag:]) / np.dot(psi, psi))


@_timed(5, "generator oracles")
def criterion_5(runs: int = 200):
    counts = [gen.simulate_hawkes_se(gen.SE_SPEC, s).n for s in range(runs)]
    mean_count = float(np.mean(counts))
    ok_a = abs(mean_count - 500) <= 25
    x = gen.simulate_garch(gen.GarchSpec(), 10**6, 1).values[:, 0]
    var = float(np.var(x))
    ok_b = abs(var - 0.8) <= 0.08
    y = gen.simulate_arma(gen.ARMA_21, 10**5, 1).values[:, 0]
    r1 = float(np.corrcoef(y[:-1], y[1:])[0, 1])
    oracle = arma_autocorrelation(gen.ARMA_21.ar, gen.ARMA_21.ma, 1)
    ok_c = abs(r1 - oracle) <= 0.02
    return ok_a and ok_b and ok_c, (
        f"SE mean count {mean_count:.1f} (target 500 +/- 25); GARCH variance {var:.4f} (0.8 +/- 0.08); "
        f"ARMA lag-1 {r1:.4f} vs oracle {oracle:.4f}"
    )


def _rate(report, hypothesis):
    rs = [r["reject"] for r in report.per_trial if r["hypothesis"] == hypothesis and r["reject"] is not None]
    return sum(rs) / len(rs) if rs else float("nan")


@_timed(6, "SE vs SC separation")
def criterion_6(trials: int = 100, seed: int = 0, workers: int = 1):
    a = run_experiment(ExperimentConfig.preset("tpp", "se", "sc", trials=trials, seed=seed), workers)
    b = run_experiment(ExperimentConfig.preset("tpp", "sc", "se", trials=trials, seed=seed), workers)
    gap = _rate(a, "H1") - _rate(a, "H0")
    cells = [a.type1_accuracy, a.type2_accuracy, b.type1_accuracy, b.type2_accuracy]
    avg = float(np.mean([c if c is not None else 0.0 for c in cells]))
    detail = (
        f"SE/SE {cells[0]:.2f}, SE/SC {cells[1]:.2f}, SC/SC {cells[2]:.2f}, SC/SE {cells[3]:.2f}; "
        f"rejection gap {gap:+.2f} (need >= 0.10), average {avg:.3f} (need >= 0.55); "
        f"excluded {a.excluded_trials + b.excluded_trials}"
    )
    return gap >= 0.10 and avg >= 0.55, detail


@_timed(7, "ARMA vs GARCH power")
def criterion_7(trials: int = 100, seed: int = 0, workers: int = 1):
    r = run_experiment(ExperimentConfig.preset("time_series", "arma1", "garch", trials=trials, seed=seed), workers)
    t2 = r.type2_accuracy if r.type2_accuracy is not None else 0.0
    return t2 >= 0.7, f"ARMA(2,1) vs GARCH type-II {t2:.2f} (need >= 0.70), type-I {r.type1_accuracy}, excluded {r.excluded_trials}"


def _direction(first, last, n_first, n_last, increasing: bool):
    """Clear move by 0.05 in the stated direction, or exemption by overlapping intervals."""
    delta = (last - first) if increasing else (first - last)
    if delta >= 0.05:
        return True, f"margin {delta:+.2f}"
    lo_f, hi_f = wilson_interval(round(first * n_first), n_first)
    lo_l, hi_l = wilson_interval(round(last * n_last), n_last)
    if lo_f <= hi_l and lo_l <= hi_f:
        return True, f"margin {delta:+.2f}, exempt (95% intervals overlap)"
    return False, f"margin {delta:+.2f}, intervals disjoint"


@_timed(8, "lambda ablation direction")
def criterion_8(trials: int = 50, seed: int = 0, workers: int = 1, lambdas=(0.001, 0.015, 0.06)):
    base = ExperimentConfig.preset("tpp", "se", "sc", trials=trials, seed=seed)
    reps = run_lambda_ablation(base, lambdas, workers)
    first, last = reps[0], reps[-1]
    n0 = first.counts()
    n1 = last.counts()
    ok2, why2 = _direction(first.type2_accuracy, last.type2_accuracy, n0["h1"], n1["h1"], True)
    ok1, why1 = _direction(first.type1_accuracy, last.type1_accuracy, n0["h0"], n1["h0"], False)
    curve = ", ".join(f"{lam:g}: ({r.type1_accuracy:.2f}, {r.type2_accuracy:.2f})" for lam, r in zip(lambdas, reps))
    return ok1 and ok2, f"(type1, type2) by lambda {curve}; type-II {why2}; type-I {why1}"


@_timed(9, "reproducibility")
def criterion_9(trials: int = 6, seed: int = 3):
    cfg = ExperimentConfig.preset("tpp", "se", "sc", trials=trials, seed=seed)
    one = run_experiment(cfg, workers=1).to_json()
    again = run_experiment(cfg, workers=1).to_json()
    par = run_experiment(cfg, workers=2).to_json()
    return one == again == par, f"serial/serial/parallel reports identical: {one == again}, {one == par} ({len(one)} bytes)"


@_timed(10, "MMD baseline sanity")
def criterion_10(runs: int = 60, seed: int = 0):
    cfg = MmdConfig()
    accept = 0
    for r in range(runs):
        d = gen.simulate_arma(gen.ARMA_21, 500, seed * 1000 + r)
        w = split_windows(d, cfg.n_subsequences)
        accept += not mmd_windows_test(w, w, cfg, seed=r).reject
    reject = 0
    for r in range(runs):
        rng = make_rng(seed, r, 10)
        w0 = rng.normal(0.0, 1.0, (cfg.n_subsequences, 10))
        w1 = rng.normal(3.0, 1.0, (cfg.n_subsequences, 10))
        reject += mmd_windows_test(w0, w1, cfg, seed=r).reject
    a, b = accept / runs, reject / runs
    return a >= 0.9 and b >= 0.95, f"identical-input acceptance {a:.2f} (>= 0.90), separated rejection {b:.2f} (>= 0.95)"


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
}


def run_all(numbers=None, workers: int = 1, echo=print) -> list[CriterionResult]:
    out = []
    for k in numbers or sorted(CRITERIA):
        fn = CRITERIA[k]
        res = fn(workers=workers) if k in (6, 7, 8) else fn()
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out
