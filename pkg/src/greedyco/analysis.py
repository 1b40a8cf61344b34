"""Empirical checks of the convergence theory.

* sampled modulus of smoothness and certificate checks;
* majorant sequences: the one-step recurrence
  a_m = a_{m-1} + min_{0<=lam<=1}(-lam v a_{m-1} + B lam^q) + delta_{m-1}
  run with equality, and trace domination against it;
* log-log rate fits;
* worst-case sequences for the two-regime recurrence (increments A n^-alpha
  below the curve, contraction by (1 - beta/n) above it);
* the epsilon_m balance for free-relaxation rates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (ConvexObjective, Dictionary, ErrorSchedule, GreedyError, RunTrace,
                   SmoothnessCertificate, pnorm)

DOMAIN_SLACK = 1e-12
CHUNK = 64


class DomainError(GreedyError):
    """A sampler produced a point outside the declared domain."""


class AnalysisError(GreedyError, ValueError):
    pass


# ---------------------------------------------------------------------------
# modulus of smoothness

@dataclass(frozen=True)
class ModulusEstimate:
    """Sampled lower bound on rho(E, S, u) at each grid point."""

    u: np.ndarray
    rho: np.ndarray
    samples: int
    sampler: str
    lower_bound: bool = True


class HullSampler:
    """Random points of A_1(D) intersected with a sublevel set of E.

    Points are convex combinations (with random signs, i.e. over the
    symmetric dictionary) of a few atoms, scaled by a uniform radius in
    [0, 1]; those outside {E <= level} are rejected.
    """

    def __init__(self, dictionary: Dictionary, E: Optional[ConvexObjective] = None,
                 level: Optional[float] = None, terms: int = 3, max_tries: int = 1000):
        self.dictionary = dictionary
        self.E = E
        self.level = level
        self.terms = int(terms)
        self.max_tries = max_tries

    @property
    def description(self) -> str:
        lv = "none" if self.level is None else repr(self.level)
        return f"hull(count={len(self.dictionary)}, terms={self.terms}, level={lv})"

    def __call__(self, rng: np.random.Generator, k: int) -> np.ndarray:
        atoms = self.dictionary.atoms
        out = np.empty((0, self.dictionary.dim))
        for _ in range(self.max_tries):
            idx = rng.integers(0, len(atoms), size=(k, self.terms))
            w = rng.dirichlet(np.ones(self.terms), size=k) * rng.random((k, 1))
            x = np.einsum("kt,ktn->kn", w, atoms[idx])
            if self.E is not None and self.level is not None:
                x = x[self.E.eval(x) <= self.level]
            out = np.concatenate([out, x])
            if len(out) >= k:
                return out[:k]
        raise DomainError(f"rejection sampling found too few points below level {self.level}")


class BoxSampler:
    """Uniform points of [-r, r]^n, optionally rejected above a level of E."""

    def __init__(self, n: int, radius: float, E: Optional[ConvexObjective] = None,
                 level: Optional[float] = None, max_tries: int = 1000):
        self.n = int(n)
        self.radius = float(radius)
        self.E = E
        self.level = level
        self.max_tries = max_tries

    @property
    def description(self) -> str:
        lv = "none" if self.level is None else repr(self.level)
        return f"box(n={self.n}, radius={self.radius!r}, level={lv})"

    def __call__(self, rng: np.random.Generator, k: int) -> np.ndarray:
        out = np.empty((0, self.n))
        for _ in range(self.max_tries):
            x = rng.uniform(-self.radius, self.radius, size=(k, self.n))
            if self.E is not None and self.level is not None:
                x = x[self.E.eval(x) <= self.level]
            out = np.concatenate([out, x])
            if len(out) >= k:
                return out[:k]
        raise DomainError(f"rejection sampling found too few points below level {self.level}")


def domain_level(E: ConvexObjective, domain: str) -> float:
    """E(0) for D, E(0) + 1 for D1."""
    e0 = E(np.zeros(E.dim))
    if domain == "D":
        return e0
    if domain == "D1":
        return e0 + 1.0
    raise ValueError(f"unknown domain {domain!r}")


def _unit_directions(rng, k, n, p):
    y = rng.standard_normal((k, n))
    nrm = pnorm(y, p)
    nrm[nrm == 0] = 1.0
    return y / nrm[:, None]


def estimate_modulus(E: ConvexObjective, sampler: Callable, u_grid, directions_per_u: int = 256,
                     seed: int = 0, norm_p: float = 2.0,
                     domain: Optional[str] = None) -> ModulusEstimate:
    """Lower bound on rho(E, S, u) = 1/2 sup |E(x+uy) + E(x-uy) - 2E(x)|.

    The same (x, y) pairs serve every u, drawn in chunks of ``CHUNK`` from
    independent child seeds, so a larger sample always contains the smaller
    one and the estimate can only grow with the sample size. If ``domain``
    ("D" or "D1") is given every sampled x is checked against it.
    """
    u = np.asarray(u_grid, dtype=float).reshape(-1)
    if u.size == 0 or np.any(u <= 0) or not np.all(np.isfinite(u)):
        raise ValueError("u grid must be nonempty and positive")
    k = int(directions_per_u)
    if k < 1:
        raise ValueError("directions_per_u must be >= 1")
    level = None if domain is None else domain_level(E, domain)
    root = np.random.SeedSequence(seed)
    rho = np.zeros(u.size)
    for c, child in enumerate(root.spawn((k + CHUNK - 1) // CHUNK)):
        size = min(CHUNK, k - c * CHUNK)
        rng = np.random.default_rng(child)
        # always draw a full chunk so a short final chunk is a prefix of a full one
        x = np.asarray(sampler(rng, CHUNK), dtype=float)
        if x.shape != (CHUNK, E.dim):
            raise DomainError(f"sampler returned shape {x.shape}, expected {(CHUNK, E.dim)}")
        x = x[:size]
        ex = E.eval(x)
        if level is not None and np.any(ex > level + DOMAIN_SLACK * (1 + abs(level))):
            bad = x[int(np.argmax(ex))]
            raise DomainError(f"sampled point {bad} lies outside domain {domain} "
                              f"(E = {float(np.max(ex))!r} > {level!r})")
        y = _unit_directions(rng, CHUNK, E.dim, norm_p)[:size]
        for i, ui in enumerate(u):
            d = E.eval(x + ui * y) + E.eval(x - ui * y) - 2.0 * ex
            rho[i] = max(rho[i], 0.5 * float(np.max(np.abs(d))))
    name = getattr(sampler, "description", getattr(sampler, "__name__", "sampler"))
    u.setflags(write=False)
    rho.setflags(write=False)
    return ModulusEstimate(u, rho, k, name)


@dataclass(frozen=True)
class CertificateReport:
    ok: bool
    max_ratio: float
    failures: list = field(default_factory=list)  # (u, estimate, bound)


def check_certificate(estimate: ModulusEstimate, cert: SmoothnessCertificate,
                      atol: float = 1e-9) -> CertificateReport:
    """One-sided test estimate(u) <= gamma u^q + atol on the grid."""
    if estimate.u.size == 0:
        raise ValueError("empty modulus grid")
    bound = cert.gamma * estimate.u ** cert.q
    ratio = estimate.rho / bound
    failures = [(float(u), float(r), float(b))
                for u, r, b in zip(estimate.u, estimate.rho, bound) if r > b + atol]
    return CertificateReport(not failures, float(np.max(ratio)), failures)


# ---------------------------------------------------------------------------
# majorants

@dataclass(frozen=True)
class MajorantParams:
    v: float
    B: float
    q: float
    a0: float
    schedule: ErrorSchedule = field(default_factory=ErrorSchedule)

    def __post_init__(self):
        if not 0 < self.v <= 1:
            raise ValueError(f"v must be in (0,1], got {self.v}")
        if not self.B > 0:
            raise ValueError(f"B must be > 0, got {self.B}")
        if not 1 < self.q <= 2:
            raise ValueError(f"q must be in (1,2], got {self.q}")
        if not self.a0 >= 0:
            raise ValueError(f"a0 must be >= 0, got {self.a0}")


def majorant_step(a, v: float, B: float, q: float):
    """a + min_{0<=lam<=1}(-lam v a + B lam^q), with the clipped closed-form minimizer."""
    a = np.asarray(a, dtype=float)
    lam = np.minimum(1.0, (v * np.maximum(a, 0.0) / (q * B)) ** (1.0 / (q - 1.0)))
    return a - lam * v * a + B * lam ** q


def majorant_sequence(params: MajorantParams, m_max: int) -> np.ndarray:
    """Extremal sequence a_0..a_{m_max} of the one-step recurrence."""
    a = np.empty(int(m_max) + 1)
    a[0] = params.a0
    for m in range(1, a.size):
        a[m] = float(majorant_step(a[m - 1], params.v, params.B, params.q)) + params.schedule(m - 1)
    return a


def relaxed_majorant_params(cert: SmoothnessCertificate, t: float, a0: float,
                            schedule: ErrorSchedule) -> MajorantParams:
    """Constants for WRGA/REGA traces: v = t, B = 2^(1+q) gamma.

    REGA's joint search does at least as well as a WRGA step with t = 1,
    so REGA traces use t = 1.
    """
    return MajorantParams(t, 2.0 ** (1.0 + cert.q) * cert.gamma, cert.q, a0, schedule)


def free_majorant_params(cert: SmoothnessCertificate, t: float, atomic_norm: float, c0: float,
                         a0: float, schedule: ErrorSchedule) -> MajorantParams:
    """Constants for WGAFR/EGAFR traces: v = t / A, B = 2 gamma C0^q.

    ``atomic_norm`` is A = A(eps) >= 1 of the comparison point and ``c0``
    bounds the norms of points of D1 (test-supplied).
    """
    if not atomic_norm >= 1:
        raise ValueError(f"A(eps) must be >= 1, got {atomic_norm}")
    if not c0 > 0:
        raise ValueError(f"C0 must be > 0, got {c0}")
    return MajorantParams(t / atomic_norm, 2.0 * cert.gamma * c0 ** cert.q, cert.q, a0, schedule)


@dataclass(frozen=True)
class DominationReport:
    ok: bool
    majorant: np.ndarray
    gaps: np.ndarray
    worst_m: int
    worst_excess: float


def check_majorant_domination(trace: RunTrace, params: MajorantParams,
                              atol: float = 1e-9) -> DominationReport:
    """a_m <= majorant_m + atol for all m. Gaps below zero count as zero.

    The recurrence map a -> a + min(...) is nondecreasing for v <= 1, which
    is what lets a trace obeying the one-step inequality stay below the
    extremal sequence started from the same a_0.
    """
    if trace.b_ref is None:
        raise AnalysisError("trace has no reference value b_ref; cannot form a_m")
    gaps = np.maximum(trace.gaps, 0.0)
    if abs(gaps[0] - params.a0) > 1e-12 * (1 + abs(params.a0)):
        raise AnalysisError(f"majorant a0 = {params.a0!r} does not match trace a0 = {gaps[0]!r}")
    maj = majorant_sequence(params, trace.iterations)
    excess = gaps - maj
    worst = int(np.argmax(excess))
    return DominationReport(bool(np.all(excess <= atol)), maj, gaps, worst, float(excess[worst]))


def lemma_one_step_ok(trace: RunTrace, gamma: float, q: float, t: float,
                      atol: float = 1e-9, grid: int = 10001) -> np.ndarray:
    """Per-step check of a_m <= a_{m-1} + min over a lam grid of
    (-lam t a_{m-1} + 2 gamma (2 lam)^q) + delta_{m-1} + atol.

    Returns a boolean array over m = 1..iterations.
    """
    a = np.maximum(trace.gaps, 0.0)
    lam = np.linspace(0.0, 1.0, grid)
    inner = np.min(-lam[None, :] * t * a[:-1, None] + 2.0 * gamma * (2.0 * lam[None, :]) ** q,
                   axis=1)
    return a[1:] <= a[:-1] + inner + trace.deltas + atol


# ---------------------------------------------------------------------------
# rate fits

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual: float
    points: int
    window: tuple
    no_decay: bool


def fit_rate_exponent(a: Sequence[float], window: tuple = (20, 2000),
                      min_points: int = 10, no_decay_slope: float = -0.05) -> RateFit:
    """Least-squares slope of log a_m against log m for m in the window.

    ``a[m]`` is a_m (a[0] = a_0). Non-positive entries are trimmed; fewer
    than ``min_points`` survivors is an error. ``residual`` is the largest
    absolute deviation of log a_m from the fitted line.
    """
    a = np.asarray(a, dtype=float)
    lo, hi = int(window[0]), int(window[1])
    if lo < 1 or hi < lo:
        raise AnalysisError(f"degenerate fit window [{lo}, {hi}]")
    m = np.arange(lo, min(hi, a.size - 1) + 1)
    y = a[m] if m.size else np.empty(0)
    keep = np.isfinite(y) & (y > 0)
    if keep.sum() < min_points:
        raise AnalysisError(f"degenerate fit window [{lo}, {hi}]: only {int(keep.sum())} "
                            f"positive values (need {min_points})")
    x, ly = np.log(m[keep]), np.log(y[keep])
    slope, intercept = np.polyfit(x, ly, 1)
    residual = float(np.max(np.abs(ly - (slope * x + intercept))))
    return RateFit(float(slope), float(intercept), residual, int(keep.sum()), (lo, hi),
                   bool(slope > no_decay_slope))


# ---------------------------------------------------------------------------
# two-regime recurrence

@dataclass(frozen=True)
class Lemma34Params:
    alpha: float
    beta: float
    A: float
    a0: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.beta > self.alpha:
            raise ValueError(f"need beta > alpha, got alpha={self.alpha}, beta={self.beta}")
        if not self.A > 0:
            raise ValueError(f"A must be > 0, got {self.A}")
        if not self.a0 >= 0:
            raise ValueError(f"a0 must be >= 0, got {self.a0}")


class HypothesisError(AnalysisError):
    def __init__(self, n: int, message: str):
        super().__init__(f"step n={n}: {message}")
        self.n = n


def lemma34_sequence(params: Lemma34Params, n_max: int, increments: bool = True) -> np.ndarray:
    """Worst-case sequence a_0..a_{n_max}.

    Below the curve (a_{n-1} < A (n-1)^-alpha, always at n = 1) the step
    adds the largest allowed increment A n^-alpha (zero if ``increments``
    is false); above it the step contracts by (1 - beta/(n-1)).
    """
    alpha, beta, A = params.alpha, params.beta, params.A
    a = np.empty(int(n_max) + 1)
    a[0] = params.a0
    for n in range(1, a.size):
        prev = a[n - 1]
        if n == 1 or prev < A * (n - 1.0) ** (-alpha):
            a[n] = prev + (A * n ** (-alpha) if increments else 0.0)
        else:
            a[n] = prev * (1.0 - beta / (n - 1.0))
    return a


def check_lemma34_hypotheses(params: Lemma34Params, a: Sequence[float]) -> None:
    """Raise HypothesisError at the first step breaking either regime.

    Every step: a_n <= a_{n-1} + A n^-alpha. Above the curve also
    a_n <= a_{n-1} (1 - beta/(n-1)); for n - 1 < beta that forces a_n < 0,
    which the recurrence allows. Also a_0 < A.
    """
    alpha, beta, A = params.alpha, params.beta, params.A
    a = np.asarray(a, dtype=float)
    if not a[0] < A:
        raise HypothesisError(0, f"a_0 = {a[0]!r} must be < A = {A!r}")
    for n in range(1, a.size):
        prev, cur = a[n - 1], a[n]
        tol = 1e-12 * (1 + abs(prev))
        if cur > prev + A * n ** (-alpha) + tol:
            raise HypothesisError(n, f"increment {cur - prev!r} exceeds A n^-alpha")
        if n > 1 and prev >= A * (n - 1.0) ** (-alpha) and cur > prev * (1.0 - beta / (n - 1.0)) + tol:
            raise HypothesisError(n, "no contraction by (1 - beta/(n-1)) above the curve")


def lemma34_empirical_check(params: Lemma34Params, n_max: int,
                            sequence: Optional[Sequence[float]] = None,
                            increments: bool = True) -> float:
    """Observed sup_n a_n n^alpha / A over n = 1..n_max.

    The worst-case sequence is generated unless ``sequence`` is given; either
    way the hypotheses are checked step by step first.
    """
    a = (lemma34_sequence(params, n_max, increments) if sequence is None
         else np.asarray(sequence, dtype=float)[: int(n_max) + 1])
    check_lemma34_hypotheses(params, a)
    n = np.arange(1, a.size)
    if n.size == 0:
        return 0.0
    return float(np.max(a[1:] * n ** params.alpha / params.A))


# ---------------------------------------------------------------------------
# epsilon_m

def epsilon_m_bound(samples: Sequence[tuple], q: float, m: int) -> Optional[float]:
    """Smallest sampled eps with A(eps)^q m^(1-q) <= eps, or None if none qualifies.

    ``samples`` are (eps, A(eps)) pairs sorted by eps, with A nonincreasing
    and >= 1.
    """
    if not samples:
        raise ValueError("no (eps, A(eps)) samples")
    eps = np.array([s[0] for s in samples], dtype=float)
    A = np.array([s[1] for s in samples], dtype=float)
    if np.any(np.diff(eps) < 0):
        raise ValueError("samples must be sorted by eps")
    if np.any(np.diff(A) > 0):
        raise ValueError("A(eps) must be nonincreasing")
    if np.any(A < 1):
        raise ValueError("A(eps) must be >= 1")
    ok = A ** q * float(m) ** (1.0 - q) <= eps
    if not np.any(ok):
        return None
    return float(eps[int(np.argmax(ok))])
