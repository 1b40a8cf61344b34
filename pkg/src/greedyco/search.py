"""Inner oracles of the greedy steps.

All line searches run on convex functions of one parameter. Golden-section
shrinking is paired with a lower bound built from secant extensions: for a
convex f and sample points a < c < d < b, the line through two neighbouring
samples, extended beyond them, lies below f. The gap between the best
sampled value and that lower bound is the certified suboptimality.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .core import ConvexObjective, Dictionary, GreedyError

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
WIDTH_TOL = 1e-14
MAX_GOLDEN_STEPS = 200
MAX_SWEEPS = 200
BOX_DOUBLINGS = 10
STATIONARY_TOL = 1e-13


class SearchError(GreedyError):
    """Non-finite objective value met during a search."""

    def __init__(self, message: str, param=None):
        super().__init__(message)
        self.param = param


class UnboundedDirectionError(GreedyError):
    """The free-relaxation minimizer keeps escaping the search box."""


class ContractViolation(GreedyError):
    pass


def floor_gap(value: float) -> float:
    """Smallest gap a search is asked to certify, relative to the scale of E."""
    return 1e-12 * (1.0 + abs(value))


@dataclass(frozen=True)
class AtomChoice:
    index: int
    score: float
    best_score: float
    stationary: bool


@dataclass(frozen=True)
class SearchResult:
    """Outcome of a step search.

    ``gap`` bounds value - (true minimum) for the searched problem;
    ``tolerance`` is the largest gap the search was allowed to stop at.
    ``fun`` maps the parameter vector ([lam] or [w, lam]) to the objective
    value for the chosen atom; ``bounds`` is the parameter box.
    """

    lam: float
    value: float
    gap: float
    evals: int
    base_value: float
    tolerance: float
    w: Optional[float] = None
    atom: Optional[int] = None
    box: Optional[float] = None
    injected: float = 0.0
    flat: bool = False
    fun: Optional[Callable] = None
    bounds: Optional[tuple] = None

    @property
    def params(self) -> np.ndarray:
        if self.w is None:
            return np.array([self.lam])
        return np.array([self.w, self.lam])


# ---------------------------------------------------------------------------
# greedy atom selection

def _select(scores: np.ndarray, t: float, grad: np.ndarray) -> AtomChoice:
    if scores.size == 0:
        raise GreedyError("empty dictionary")
    if not np.all(np.isfinite(grad)):
        raise SearchError("gradient is not finite")
    best = int(np.argmax(scores))
    best_score = float(scores[best])
    stationary = best_score < STATIONARY_TOL * (1.0 + float(np.linalg.norm(grad)))
    if stationary:
        return AtomChoice(0 if best_score <= 0 else best, max(best_score, 0.0), best_score, True)
    if t >= 1.0:
        return AtomChoice(best, best_score, best_score, False)
    idx = int(np.flatnonzero(scores >= t * best_score)[0])
    return AtomChoice(idx, float(scores[idx]), best_score, False)


def weak_argmax_frank_wolfe(grad: np.ndarray, dictionary: Dictionary, t: float = 1.0) -> AtomChoice:
    """Atom phi with <-E'(G), phi> >= t * max_g <-E'(G), g>.

    For t < 1 the lowest-index atom meeting the threshold is returned. A
    (numerically) zero best score is flagged as stationary.
    """
    scores = dictionary.atoms @ (-np.asarray(grad, dtype=float))
    return _select(scores, t, grad)


def weak_argmax_relative(grad: np.ndarray, G: np.ndarray, dictionary: Dictionary,
                         t: float = 1.0) -> AtomChoice:
    """Same as :func:`weak_argmax_frank_wolfe` with scores <-E'(G), g - G>."""
    neg = -np.asarray(grad, dtype=float)
    scores = dictionary.atoms @ neg - float(neg @ np.asarray(G, dtype=float))
    return _select(scores, t, grad)


# ---------------------------------------------------------------------------
# certified golden section, batched over independent 1-D problems

def convex_lower_bound(xs, fs):
    """Lower bound of a convex f on [xs[0], xs[-1]] from sorted samples.

    On each cell the bound is the larger of the two neighbouring secants,
    extended into the cell; its minimum over the cell sits at an endpoint or
    at the crossing of the two lines. The end cells have one neighbour only.
    Works along the last axis, so ``xs`` and ``fs`` may be (N,) or (k, N).
    Returns the per-row bound.
    """
    fs = np.asarray(fs, dtype=float)
    xs = np.broadcast_to(np.asarray(xs, dtype=float), fs.shape)
    if fs.shape[-1] < 3:
        return np.full(fs.shape[:-1], -np.inf)
    dx = np.diff(xs, axis=-1)
    df = np.diff(fs, axis=-1)
    s = df / np.where(dx > 0, dx, np.inf)
    # first cell: next secant only; last cell: previous secant only
    bound = np.minimum(np.minimum(fs[..., 1] - s[..., 1] * dx[..., 0], fs[..., 1]),
                       np.minimum(fs[..., -2], fs[..., -2] + s[..., -2] * dx[..., -1]))
    if fs.shape[-1] == 3:
        return bound
    x0, x1 = xs[..., 1:-2], xs[..., 2:-1]
    f0, f1 = fs[..., 1:-2], fs[..., 2:-1]
    sp, sn = s[..., :-2], s[..., 2:]
    den = sp - sn
    cross = den < 0
    xk = np.where(cross, (f1 - f0 + sp * x0 - sn * x1) / np.where(cross, den, -1.0), x0)
    xk = np.minimum(np.maximum(xk, x0), x1)
    h = x1 - x0
    at0 = np.maximum(f0, f1 - sn * h)
    at1 = np.maximum(f0 + sp * h, f1)
    atk = np.maximum(f0 + sp * (xk - x0), f1 + sn * (xk - x1))
    cell = np.minimum(np.minimum(at0, at1), atk)
    return np.minimum(bound, np.min(cell, axis=-1))


def _checked(values, params):
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = np.unravel_index(int(np.flatnonzero(bad)[0]), bad.shape)
        p = np.broadcast_to(params, bad.shape)[i]
        raise SearchError(f"non-finite objective value at parameter {p!r}", p)
    return values


def _lower_bound4(a, c, d, b, fa, fc, fd, fb):
    # scalar twin of convex_lower_bound
    s1 = (fc - fa) / (c - a) if c > a else 0.0
    s2 = (fd - fc) / (d - c) if d > c else 0.0
    s3 = (fb - fd) / (b - d) if b > d else 0.0
    low = min(fc + s2 * (a - c), fc, fd + s2 * (b - d), fd)
    gc = max(fc, fd + s3 * (c - d))
    gd = max(fc + s1 * (d - c), fd)
    low = min(low, gc, gd)
    if s1 != s3:
        xk = min(max((fd - fc + s1 * c - s3 * d) / (s1 - s3), c), d)
        low = min(low, max(fc + s1 * (xk - c), fd + s3 * (xk - d)))
    return low


def _finite(v, x):
    if not math.isfinite(v):
        raise SearchError(f"non-finite objective value at parameter {x!r}", x)
    return v


def golden_scalar(f, lo, hi, tol, start=None, f_start=None):
    """Certified golden-section minimization of a convex f on [lo, hi].

    Stops when the secant gap is <= tol or the bracket is narrower than
    ``WIDTH_TOL``. ``start``/``f_start`` name a preferred point kept unless
    strictly improved on. Points outside the bracket were discarded by
    comparisons that, under convexity, put them above the best sample, so
    the gap covers all of [lo, hi].

    Returns (x_best, f_best, gap, evals).
    """
    a, b = float(lo), float(hi)
    fa, fb = _finite(f(a), a), _finite(f(b), b)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = _finite(f(c), c), _finite(f(d), d)
    evals = 4
    min_width = WIDTH_TOL * max(1.0, b - a)
    for _ in range(MAX_GOLDEN_STEPS):
        best = min(fa, fb, fc, fd)
        if best - _lower_bound4(a, c, d, b, fa, fc, fd, fb) <= tol or b - a < min_width:
            break
        if fc <= fd:
            b, d, fb, fd = d, c, fd, fc
            c = b - INV_PHI * (b - a)
            fc = _finite(f(c), c)
        else:
            a, c, fa, fc = c, d, fc, fd
            d = a + INV_PHI * (b - a)
            fd = _finite(f(d), d)
        evals += 1
    x_best, f_best = min(((a, fa), (c, fc), (d, fd), (b, fb)), key=lambda p: p[1])
    if start is not None and f_start <= f_best:
        x_best, f_best = start, f_start
    gap = max(f_best - _lower_bound4(a, c, d, b, fa, fc, fd, fb), 0.0)
    return x_best, f_best, gap, evals


# ---------------------------------------------------------------------------
# step searches

def line_search_unit_interval(E: ConvexObjective, G, phi, target_gap: float = 0.0) -> SearchResult:
    """Certified minimization of lam -> E((1 - lam) G + lam phi) over [0, 1].

    Golden section shrinks the bracket until the certified gap is <=
    target_gap or the bracket is narrower than ``WIDTH_TOL``; the result is
    then within max(target_gap, floor_gap(E(G))) of the minimum. Ties with
    lam = 0 keep lam = 0.
    """
    G = np.asarray(G, dtype=float)
    direction = np.asarray(phi, dtype=float) - G
    base = float(E.eval(G))
    tol = max(float(target_gap), floor_gap(base))

    def fun1(lam):
        return float(E.eval(G + lam * direction))

    if not np.any(direction):
        return SearchResult(0.0, base, 0.0, 1, base, tol, fun=lambda p: fun1(p[0]),
                            bounds=((0.0, 1.0),))

    lam, value, gap, evals = golden_scalar(fun1, 0.0, 1.0, float(target_gap), 0.0, base)
    return SearchResult(lam, value, gap, evals + 1, base, tol,
                        fun=lambda p: fun1(p[0]), bounds=((0.0, 1.0),))


GRID_POINTS = 17
# grid once at most two atoms are left, where rounds cost more than evaluations
FINE_POINTS = 257
MAX_ZOOM_ROUNDS = 40


def joint_dict_line_search(E: ConvexObjective, G, dictionary: Dictionary,
                           target_gap: float = 0.0) -> SearchResult:
    """Best (atom, lam) for E((1 - lam) G + lam g) over g in the dictionary.

    All atoms are searched together by zooming grids: each round samples
    every live atom's bracket on ``GRID_POINTS`` points in one batched call,
    drops atoms whose secant lower bound shows they cannot beat the best
    value found by more than max(target_gap, floor_gap(E(G))), and shrinks the other brackets
    to the two cells around their best sample (width / 8, or width / 128
    once at most two atoms remain). Outside that
    bracket convexity keeps f above the best sample, so per-atom bounds stay
    valid. Ties go to the lowest lam, then the lowest atom index.
    """
    G = np.asarray(G, dtype=float)
    dirs = dictionary.atoms - G
    k = len(dictionary)
    base = float(E.eval(G))
    target = float(target_gap)
    tol = max(target, floor_gap(base))

    lo, hi = np.zeros(k), np.ones(k)
    best_f = np.full(k, np.inf)
    best_x = np.zeros(k)
    low = np.full(k, -np.inf)
    live = np.arange(k)
    evals = 0
    for _ in range(MAX_ZOOM_ROUNDS):
        npts = GRID_POINTS if live.size > 2 else FINE_POINTS
        u = np.linspace(0.0, 1.0, npts)
        xs = lo[live, None] + (hi - lo)[live, None] * u
        pts = G + xs[..., None] * dirs[live, None, :]
        fs = _checked(E.eval(pts.reshape(-1, G.size)).reshape(live.size, npts), xs)
        evals += fs.size
        j = np.argmin(fs, axis=1)
        rows = np.arange(live.size)
        best_f[live] = fs[rows, j]
        best_x[live] = xs[rows, j]
        lo[live] = xs[rows, np.maximum(j - 1, 0)]
        hi[live] = xs[rows, np.minimum(j + 1, npts - 1)]
        holder = int(np.argmin(best_f))
        narrow = hi[live] - lo[live] < WIDTH_TOL
        # the holder's bound from an earlier, wider bracket stays valid, so
        # with no target it is refreshed only on its last round
        need = (live != holder) | narrow | (target > 0)
        if np.any(need):
            # under convexity only the cells next to the best sample can dip
            # below it, so the bound is taken on a 5-point window around it
            r = rows[need]
            win = np.clip(j[r] - 2, 0, npts - 5)[:, None] + np.arange(5)
            low[live[r]] = np.minimum(
                convex_lower_bound(xs[r[:, None], win], fs[r[:, None], win]), best_f[live[r]])
        still = (low[live] < best_f[holder] - tol) | (live == holder)
        still &= best_f[live] - low[live] > target
        still &= ~narrow
        live = live[still]
        if live.size == 0:
            break

    i = int(np.argmin(best_f))
    value = float(best_f[i])
    lam = float(best_x[i])
    gap = max(value - float(np.min(low)), 0.0)
    d = dirs[i]

    def fun(p):
        return float(E.eval(G + p[0] * d))

    return SearchResult(lam, value, gap, evals + 1, base, tol, atom=i,
                        fun=fun, bounds=((0.0, 1.0),))


def free_relaxation_search(E: ConvexObjective, G, phi, target_gap: float = 0.0,
                           w_max: float = 4.0) -> SearchResult:
    """Minimize (w, lam) -> E((1 - w) G + lam phi) over [-W, W]^2.

    Alternates certified 1-D searches in lam and w, each followed by a line
    search along the displacement of the last sweep. Stops when a sweep
    improves by less than tol/4 and both 1-D gaps are below tol/4. Whenever
    the minimizer sits on the box boundary, W doubles (at most
    ``BOX_DOUBLINGS`` times).

    The reported gap is the sum of the two final 1-D gaps and the last
    sweep's improvement.
    """
    if not w_max >= 1:
        raise ValueError(f"W_max must be >= 1, got {w_max}")
    G = np.asarray(G, dtype=float)
    phi = np.asarray(phi, dtype=float)
    base = float(E.eval(G))
    tol = max(float(target_gap), floor_gap(base))
    quarter = tol / 4.0
    inner = float(target_gap) / 4.0
    g_zero = not np.any(G)

    def F(w, lam):
        return float(E.eval((1.0 - w) * G + lam * phi))

    def fun(p):
        return F(p[0], p[1])

    evals = 1
    w, lam, val = 0.0, 0.0, base
    W = float(w_max)
    for _ in range(BOX_DOUBLINGS + 1):
        gap_l = gap_w = improvement = 0.0
        on_edge = False
        prev_end = None
        for _sweep in range(MAX_SWEEPS):
            v0 = val
            lam, val, gap_l, n = golden_scalar(lambda s: F(w, s), -W, W, inner, lam, val)
            evals += n
            if not g_zero:
                w, val, gap_w, n = golden_scalar(lambda s: F(s, lam), -W, W, inner, w, val)
                evals += n
            improvement = v0 - val
            on_edge = max(abs(w), abs(lam)) >= W * (1.0 - 1e-9)
            if on_edge or (improvement < quarter and gap_l <= quarter and gap_w <= quarter):
                break
            # successive sweep ends all minimize over w; for a quadratic they
            # lie on one line through the joint minimizer
            if prev_end is not None:
                dw, dl = w - prev_end[0], lam - prev_end[1]
                if dw or dl:
                    s_hi = _ray_limit(w, lam, dw, dl, W)
                    s_lo = -_ray_limit(w, lam, -dw, -dl, W)
                    s, v, _, n = golden_scalar(lambda s: F(w + s * dw, lam + s * dl),
                                               s_lo, s_hi, inner, 0.0, val)
                    evals += n
                    if v < val:
                        prev_end = None
                        w, lam, val = w + s * dw, lam + s * dl, v
                        continue
            prev_end = (w, lam)
        if not on_edge:
            gap = gap_l + gap_w + max(improvement, 0.0)
            return SearchResult(lam, val, gap, evals, base, tol, w=w, box=W, fun=fun,
                                bounds=((-W, W), (-W, W)))
        W *= 2.0
    raise UnboundedDirectionError(
        f"free-relaxation minimizer stays on the box boundary up to W = {W / 2:g} "
        "(objective likely not coercive on the search plane)")


def _ray_limit(w, lam, dw, dl, W):
    # largest s >= 0 keeping (w + s dw, lam + s dl) in [-W, W]^2
    lim = np.inf
    for x, dx in ((w, dw), (lam, dl)):
        if dx > 0:
            lim = min(lim, (W - x) / dx)
        elif dx < 0:
            lim = min(lim, (-W - x) / dx)
    return max(lim, 0.0) if np.isfinite(lim) else 0.0


def joint_dict_free_search(E: ConvexObjective, G, dictionary: Dictionary,
                           target_gap: float = 0.0, w_max: float = 4.0) -> SearchResult:
    """Free-relaxation search for every atom; best value wins, lowest index on ties."""
    best = None
    evals = 0
    for i in range(len(dictionary)):
        r = free_relaxation_search(E, G, dictionary.atoms[i], target_gap, w_max)
        evals += r.evals
        if best is None or r.value < best.value:
            best = replace(r, atom=i)
    return replace(best, evals=evals)


# ---------------------------------------------------------------------------
# error model

def apply_error_mode(result: SearchResult, delta: float, mode: str,
                     rng: np.random.Generator, tries: int = 4) -> SearchResult:
    """Apply the step error model to a search result.

    ``tolerance``: the search's own inexactness is the error; the result is
    returned as is after checking its certified gap against delta.
    ``inject``: the parameters are moved along a random direction, with the
    step length found by bisection, so that the value rises by an amount in
    [delta/2, delta]. If no such move exists inside the parameter box the
    result comes back unperturbed with ``flat`` set.
    """
    if mode not in ("tolerance", "inject"):
        raise ValueError(f"unknown error mode {mode!r}")
    delta = float(delta)
    if mode == "tolerance":
        if result.gap > max(delta, result.tolerance):
            raise ContractViolation(
                f"certified gap {result.gap:.3e} exceeds allowed error {delta:.3e}")
        return result
    if delta <= 0:
        return result
    if result.fun is None or result.bounds is None:
        raise ValueError("result carries no parameter function to perturb")

    p0 = result.params
    v0 = float(result.fun(p0))
    lo = np.array([b[0] for b in result.bounds])
    hi = np.array([b[1] for b in result.bounds])
    for _ in range(tries):
        u = rng.standard_normal(p0.size)
        nu = np.linalg.norm(u)
        if nu == 0:
            continue
        u /= nu
        for direction in (u, -u):
            p = _bisect_increase(result.fun, p0, v0, direction, lo, hi, delta)
            if p is not None:
                v = float(result.fun(p))
                w = float(p[0]) if p.size == 2 else None
                return replace(result, lam=float(p[-1]), w=w, value=v, injected=v - v0)
    return replace(result, injected=0.0, flat=True)


def _bisect_increase(fun, p0, v0, u, lo, hi, delta, steps=200):
    s_max = np.inf
    for x, dx, l, h in zip(p0, u, lo, hi):
        if dx > 0:
            s_max = min(s_max, (h - x) / dx)
        elif dx < 0:
            s_max = min(s_max, (l - x) / dx)
    if not np.isfinite(s_max) or s_max <= 0:
        return None

    def rise(s):
        return float(fun(np.clip(p0 + s * u, lo, hi))) - v0

    r = rise(s_max)
    if r < 0.5 * delta:
        return None
    if r <= delta:
        return np.clip(p0 + s_max * u, lo, hi)
    s_lo, s_hi = 0.0, s_max
    for _ in range(steps):
        s = 0.5 * (s_lo + s_hi)
        r = rise(s)
        if 0.5 * delta <= r <= delta:
            return np.clip(p0 + s * u, lo, hi)
        if r < 0.5 * delta:
            s_lo = s
        else:
            s_hi = s
    return None
