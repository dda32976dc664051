"""Seeded simulators for the synthetic benchmark processes.

Regular series (ARMA, GARCH) are returned on a grid with spacing 0.1.
Point processes are returned as event sequences whose value rows hold the
inter-event time (first event measured from 0), followed by the location for
spatio-temporal processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numba import njit
from scipy.signal import lfilter

from renal.errors import InsufficientDataError, InvalidInputError, ThinningBoundError
from renal.rng import make_rng
from renal.sequence import ObservationSequence

REGULAR_SPACING = 0.1


@dataclass(frozen=True)
class ArmaSpec:
    ar: tuple[float, ...]
    ma: tuple[float, ...]
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "ar", tuple(float(a) for a in np.atleast_1d(self.ar)))
        object.__setattr__(self, "ma", tuple(float(a) for a in np.atleast_1d(self.ma)))
        if self.sigma < 0:
            raise InvalidInputError("sigma must be nonnegative")
        if self.ar:
            # roots of 1 - a1 z - ... - ap z^p
            roots = np.roots(np.r_[-np.array(self.ar)[::-1], 1.0])
            if np.any(np.abs(roots) <= 1.0):
                raise InvalidInputError(f"AR polynomial {self.ar} is not stationary")


ARMA_21 = ArmaSpec((0.5, 0.4), (0.65,), 1.0)
ARMA_22 = ArmaSpec((0.5, -0.4), (0.3, -0.2), 1.0)


@dataclass(frozen=True)
class GarchSpec:
    """GARCH(1,1) with a leverage term on negative shocks."""

    mu: float = 0.03
    omega: float = 0.04
    alpha: float = 0.04
    beta: float = 0.9
    gamma: float = 0.02

    def __post_init__(self):
        if self.omega <= 0:
            raise InvalidInputError("omega must be positive")
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise InvalidInputError("alpha, beta and gamma must be nonnegative")
        if self.alpha + self.beta + self.gamma / 2 >= 1:
            raise InvalidInputError("alpha + beta + gamma/2 must be below 1")

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.alpha - self.beta - self.gamma / 2)


@dataclass(frozen=True)
class HawkesSpec:
    """Self-exciting process with exponential kernel."""

    mu: float = 1.0
    alpha: float = 1.0
    beta: float = 1.25
    lambda_bar: float = 100.0
    horizon: float = 100.0

    def __post_init__(self):
        if self.mu <= 0 or self.beta <= 0 or self.alpha < 0:
            raise InvalidInputError("mu and beta must be positive, alpha nonnegative")
        if self.alpha / self.beta >= 1:
            raise InvalidInputError("alpha/beta must be below 1 (subcritical)")
        if self.lambda_bar < self.mu:
            raise InvalidInputError("lambda_bar must be at least mu")

    @property
    def stationary_rate(self) -> float:
        return self.mu / (1.0 - self.alpha / self.beta)


@dataclass(frozen=True)
class SelfCorrectingSpec:
    mu: float = 2.5
    alpha: float = 0.05
    beta: float = 0.25
    lambda_bar: float = 100.0
    horizon: float = 100.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta <= 0:
            raise InvalidInputError("alpha must be nonnegative and beta positive")


@dataclass(frozen=True)
class StppSpec:
    kernel: Literal["standard", "gaussian"] = "standard"
    mu: float = 1.0
    C: float = 1.0
    beta: float = 0.25
    sigma_x: float = 0.5
    sigma_y: float = 0.5
    mu_x: float = 0.0
    mu_y: float = 0.0
    rho: float = 0.0
    lambda_bar: float = 1e4
    horizon: float = 1.0

    def __post_init__(self):
        if self.kernel not in ("standard", "gaussian"):
            raise InvalidInputError(f"unknown kernel {self.kernel!r}")
        if self.sigma_x <= 0 or self.sigma_y <= 0:
            raise InvalidInputError("sigma_x and sigma_y must be positive")
        if not abs(self.rho) < 1:
            raise InvalidInputError("|rho| must be below 1")


SE_SPEC = HawkesSpec()
SC_SPEC = SelfCorrectingSpec()
STPP_STD = StppSpec("standard", mu=1.0, C=1.0, beta=0.25, sigma_x=0.5, sigma_y=0.5)
STPP_GAU = StppSpec("gaussian", mu=2.5, C=1.0, beta=1.0, sigma_x=1.0, sigma_y=1.0, mu_x=0.1, mu_y=0.1, rho=0.0)


def _regular(x, dt=REGULAR_SPACING):
    return ObservationSequence(np.arange(len(x)) * dt, x, "regular")


def _events(times, marks=None):
    times = np.asarray(times, dtype=np.float64)
    if times.size < 2:
        raise InsufficientDataError(f"simulation produced {times.size} event(s); at least 2 are needed")
    gaps = np.diff(times, prepend=0.0)
    cols = [gaps[:, None]]
    if marks is not None:
        cols.append(np.asarray(marks, dtype=np.float64))
    return ObservationSequence(times, np.hstack(cols), "event")


# ---------------------------------------------------------------- ARMA / GARCH


def simulate_arma(spec: ArmaSpec, n: int, seed: int, dt: float = REGULAR_SPACING) -> ObservationSequence:
    if n < 2:
        raise InsufficientDataError("a sequence needs at least 2 observations")
    burn = max(200, 10 * (len(spec.ar) + len(spec.ma)))
    eps = make_rng(seed).standard_normal(burn + n) * spec.sigma
    x = lfilter(np.r_[1.0, spec.ma], np.r_[1.0, -np.array(spec.ar)], eps)
    return _regular(x[burn:], dt)


@njit(cache=True)
def _garch_loop(eps, mu, omega, alpha, beta, gamma, s2_init):
    n = eps.shape[0]
    x = np.empty(n)
    s2 = np.empty(n)
    prev_s2 = s2_init
    prev_eta = 0.0
    for i in range(n):
        lev = prev_eta * prev_eta if prev_eta < 0.0 else 0.0
        v = omega + alpha * prev_eta * prev_eta + beta * prev_s2 + gamma * lev
        eta = math.sqrt(v) * eps[i]
        x[i] = mu + eta
        s2[i] = v
        prev_s2 = v
        prev_eta = eta
    return x, s2


def garch_path(spec: GarchSpec, n: int, seed: int, burn: int = 500):
    """Returns ``(x, sigma2)`` after discarding ``burn`` steps."""
    eps = make_rng(seed).standard_normal(burn + n)
    x, s2 = _garch_loop(eps, spec.mu, spec.omega, spec.alpha, spec.beta, spec.gamma,
                        spec.unconditional_variance)
    return x[burn:], s2[burn:]


def simulate_garch(spec: GarchSpec, n: int, seed: int, dt: float = REGULAR_SPACING) -> ObservationSequence:
    if n < 2:
        raise InsufficientDataError("a sequence needs at least 2 observations")
    x, _ = garch_path(spec, n, seed)
    return _regular(x, dt)


# ---------------------------------------------------------------- point processes


def hawkes_intensity(t: float, events, spec: HawkesSpec) -> float:
    ev = np.asarray(events, dtype=np.float64)
    past = ev[ev < t]
    return spec.mu + spec.alpha * float(np.sum(np.exp(-spec.beta * (t - past))))


def hawkes_event_times(spec: HawkesSpec, rng: np.random.Generator) -> np.ndarray:
    """Ogata thinning with the intensity at the current time as the bound.

    The intensity only decays between events, so its value just after the
    latest accepted or rejected point bounds it until the next event.
    """
    t = 0.0
    excess = 0.0  # intensity above baseline at time t
    times = []
    while True:
        bound = spec.mu + excess
        if bound > spec.lambda_bar:
            raise ThinningBoundError(f"Hawkes intensity {bound:.6g} exceeds cap {spec.lambda_bar:g} at t={t:.6g}")
        w = rng.exponential(1.0 / bound)
        if t + w >= spec.horizon:
            break
        t += w
        excess *= math.exp(-spec.beta * w)
        lam = spec.mu + excess
        if rng.uniform() * bound <= lam:
            times.append(t)
            excess += spec.alpha
    return np.array(times)


def simulate_hawkes_se(spec: HawkesSpec, seed: int) -> ObservationSequence:
    return _events(hawkes_event_times(spec, make_rng(seed)))


def self_correcting_log_intensity(t: float, events, spec: SelfCorrectingSpec) -> float:
    ev = np.asarray(events, dtype=np.float64)
    return spec.mu + spec.alpha * t - spec.beta * int(np.count_nonzero(ev < t))


def self_correcting_event_times(spec: SelfCorrectingSpec, rng: np.random.Generator, segment: float = 1.0):
    """Thinning with a bound recomputed at the end of each short segment.

    Between events the log-intensity grows linearly, so its value at the
    segment end bounds the intensity over the whole segment.
    """
    t = 0.0
    count = 0
    times = []
    while t < spec.horizon:
        end = min(t + segment, spec.horizon)
        log_bound = spec.mu + spec.alpha * end - spec.beta * count
        bound = math.exp(log_bound)
        if bound > spec.lambda_bar:
            raise ThinningBoundError(
                f"self-correcting intensity {bound:.6g} exceeds cap {spec.lambda_bar:g} near t={t:.6g}"
            )
        w = rng.exponential(1.0 / bound)
        if t + w >= end:
            t = end
            continue
        t += w
        lam = math.exp(spec.mu + spec.alpha * t - spec.beta * count)
        if rng.uniform() * bound <= lam:
            times.append(t)
            count += 1
    return np.array(times)


def simulate_self_correcting(spec: SelfCorrectingSpec, seed: int) -> ObservationSequence:
    return _events(self_correcting_event_times(spec, make_rng(seed)))


# ---------------------------------------------------------------- spatio-temporal


def standard_kernel(dt, dx, dy, spec: StppSpec):
    dt = np.asarray(dt, dtype=np.float64)
    norm = spec.C * np.exp(-spec.beta * dt) / (2 * np.pi * spec.sigma_x * spec.sigma_y * dt)
    return norm * np.exp(-(np.square(dx) / spec.sigma_x ** 2 + np.square(dy) / spec.sigma_y ** 2) / (2 * dt))


def gaussian_kernel(dt, dx, dy, spec: StppSpec):
    dt = np.asarray(dt, dtype=np.float64)
    one_m = 1.0 - spec.rho ** 2
    ux = (np.asarray(dx) - spec.mu_x) / spec.sigma_x
    uy = (np.asarray(dy) - spec.mu_y) / spec.sigma_y
    norm = spec.C * np.exp(-spec.beta * dt) / (2 * np.pi * spec.sigma_x * spec.sigma_y * dt * math.sqrt(one_m))
    return norm * np.exp(-(ux * ux + uy * uy - 2 * spec.rho * ux * uy) / (2 * dt * one_m))


def stpp_kernel(dt, dx, dy, spec: StppSpec):
    fn = standard_kernel if spec.kernel == "standard" else gaussian_kernel
    return fn(dt, dx, dy, spec)


def stpp_intensity(t, x, y, history, spec: StppSpec) -> float:
    """Baseline plus kernel contributions of events strictly before ``t``.

    ``history`` is an ``(k, 3)`` array of ``(t_i, x_i, y_i)`` rows.
    """
    h = np.asarray(history, dtype=np.float64).reshape(-1, 3)
    h = h[h[:, 0] < t]
    if h.size == 0:
        return spec.mu
    return spec.mu + float(np.sum(stpp_kernel(t - h[:, 0], x - h[:, 1], y - h[:, 2], spec)))


def stpp_events(spec: StppSpec, rng: np.random.Generator) -> np.ndarray:
    """Space-time thinning against the constant bound ``lambda_bar``.

    Proposals are drawn uniformly on the unit square, so the process is
    restricted to that square.
    """
    if spec.mu > spec.lambda_bar:
        raise ThinningBoundError(f"STPP baseline {spec.mu:g} exceeds cap {spec.lambda_bar:g}")
    n_prop = rng.poisson(spec.lambda_bar * spec.horizon)
    pt = np.sort(rng.uniform(0.0, spec.horizon, n_prop))
    px = rng.uniform(0.0, 1.0, n_prop)
    py = rng.uniform(0.0, 1.0, n_prop)
    u = rng.uniform(0.0, 1.0, n_prop)
    accepted = []
    for k in range(n_prop):
        lam = spec.mu
        if accepted:
            h = np.asarray(accepted)
            lam += float(np.sum(stpp_kernel(pt[k] - h[:, 0], px[k] - h[:, 1], py[k] - h[:, 2], spec)))
        if lam > spec.lambda_bar:
            raise ThinningBoundError(f"STPP intensity {lam:.6g} exceeds cap {spec.lambda_bar:g} at t={pt[k]:.6g}")
        if u[k] * spec.lambda_bar <= lam:
            accepted.append((pt[k], px[k], py[k]))
    return np.asarray(accepted, dtype=np.float64).reshape(-1, 3)


def simulate_stpp(spec: StppSpec, seed: int) -> ObservationSequence:
    ev = stpp_events(spec, make_rng(seed))
    return _events(ev[:, 0], ev[:, 1:])


REGULAR_PROCESSES = ("arma1", "arma2", "garch")

PROCESSES = {
    "arma1": lambda seed, n=500: simulate_arma(ARMA_21, n, seed),
    "arma2": lambda seed, n=500: simulate_arma(ARMA_22, n, seed),
    "garch": lambda seed, n=500: simulate_garch(GarchSpec(), n, seed),
    "se": lambda seed: simulate_hawkes_se(SE_SPEC, seed),
    "sc": lambda seed: simulate_self_correcting(SC_SPEC, seed),
    "stpp_std": lambda seed: simulate_stpp(STPP_STD, seed),
    "stpp_gau": lambda seed: simulate_stpp(STPP_GAU, seed),
}
