"""Reference optima for experiments.

``b`` is the infimum of E over A_1(D) for the relaxed algorithms and the
infimum over R^n for the free-relaxation ones. It comes either from a
closed form or from a brute-force grid solve in dimension <= 3.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from .core import ConvexObjective, Dictionary, GreedyError, pnorm

BRUTE_MAX_DIM = 3
BRUTE_POINTS = {1: 20001, 2: 401, 3: 61}
BRUTE_REFINE = 2000
HULL_TOL = 1e-12


class ReferenceError(GreedyError):
    pass


@dataclass(frozen=True)
class Reference:
    value: float
    provenance: str


def atomic_norm(f, dictionary: Dictionary) -> float:
    """min sum c_i over c >= 0 with sum c_i g_i = f, i.e. the gauge of A_1(D).

    Returns inf if f is outside the span of the dictionary.
    """
    f = np.asarray(f, dtype=float)
    k = len(dictionary)
    res = linprog(np.ones(k), A_eq=dictionary.atoms.T, b_eq=f, bounds=[(0, None)] * k,
                  method="highs")
    if res.status == 2:
        return float("inf")
    if not res.success:
        raise ReferenceError(f"atomic norm LP failed: {res.message}")
    return float(res.fun)


def project_l1_ball(f, radius: float = 1.0) -> np.ndarray:
    """Euclidean projection onto {x : ||x||_1 <= radius} by sorting."""
    f = np.asarray(f, dtype=float)
    if np.sum(np.abs(f)) <= radius:
        return f.copy()
    u = np.sort(np.abs(f))[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    rho = int(np.flatnonzero(u - (css - radius) / k > 0)[-1])
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(f) * np.maximum(np.abs(f) - theta, 0.0)


def _is_canonical(dictionary: Dictionary) -> bool:
    n = dictionary.dim
    a = dictionary.atoms
    return len(a) == 2 * n and all(
        np.count_nonzero(row) == 1 and abs(np.max(np.abs(row)) - 1.0) == 0 for row in a)


def analytic_b(E: ConvexObjective, dictionary: Dictionary, free: bool) -> Reference:
    """Closed-form reference values.

    * free relaxation with a known minimizer: b = E(argmin);
    * quadratic with f in A_1(D) (atomic norm <= 1, by LP): b = 0;
    * quadratic with the canonical dictionary: E at the l1-ball projection.
    """
    if free:
        if E.argmin is None:
            raise ReferenceError(f"no closed-form minimizer for {E.kind}")
        return Reference(E(E.argmin), "analytic: E(argmin)")
    if E.kind != "quadratic":
        raise ReferenceError(f"no closed-form b over A_1 for {E.kind}")
    f = E.params["f"]
    if atomic_norm(f, dictionary) <= 1.0 + 1e-12:
        return Reference(0.0, "analytic: f in A_1 (atomic norm <= 1)")
    if _is_canonical(dictionary):
        return Reference(E(project_l1_ball(f)), "analytic: l1-ball projection")
    raise ReferenceError("no closed-form b for a quadratic outside A_1 of a non-canonical dictionary")


def _hull(dictionary: Dictionary):
    """(facet equations, facet vertex arrays) of conv(D)."""
    a = dictionary.atoms
    if dictionary.dim == 1:
        r = float(np.max(np.abs(a)))
        return np.array([[1.0, -r], [-1.0, -r]]), [np.array([[r]]), np.array([[-r]])]
    h = ConvexHull(a)
    return h.equations, [a[s] for s in h.simplices]


def _inside(eq, x):
    return np.all(x @ eq[:, :-1].T + eq[:, -1] <= HULL_TOL, axis=-1)


def brute_force_b(E: ConvexObjective, dictionary: Dictionary, free: bool,
                  radius: float = None) -> Reference:
    """Grid minimum of E over A_1(D) (or over a box for free relaxation),
    refined by repeated local grids around the incumbent. Dimension <= 3.

    Over A_1(D) the interior grid is complemented by a search of every hull
    facet, since a lattice cannot follow a slanted face.

    For the free case the box [-R, R]^n starts at R = ``radius`` (default
    2 (1 + ||argmin||) or 4) and doubles while the minimizer sits on its edge.
    """
    n = E.dim
    if n > BRUTE_MAX_DIM:
        raise ReferenceError(f"brute-force b is limited to n <= {BRUTE_MAX_DIM}, got n = {n}")
    pts = BRUTE_POINTS[n]
    if free:
        R = radius or (2.0 * (1.0 + float(np.max(np.abs(E.argmin)))) if E.argmin is not None
                       else 4.0)
        for _ in range(12):
            x, v = _grid_min(E, -R * np.ones(n), R * np.ones(n), pts, None)
            if np.max(np.abs(x)) < R * (1 - 2.0 / pts):
                break
            R *= 2.0
        else:
            raise ReferenceError("free minimizer escapes every search box")
        eq = None
        lo, hi = -R * np.ones(n), R * np.ones(n)
    else:
        eq, facets = _hull(dictionary)
        r = float(np.max(np.abs(dictionary.atoms)))
        lo, hi = -r * np.ones(n), r * np.ones(n)
        x, v = _grid_min(E, lo, hi, pts, eq)
    x, v, _ = _refine(E, x, v, (hi - lo) / (pts - 1), eq, None)
    if not free:
        # a boundary minimum is found on the facets, where the feasible set is a
        # simplex in barycentric coordinates and the grid can follow it exactly
        for V in facets:
            bx, bv, _ = _facet_min(E, V, pts)
            if bv < v:
                x, v = bx, bv
    what = "A_1(D) interior and facets" if not free else "R^n"
    return Reference(v, f"brute-force grid over {what} (n={n}, {pts} points/axis)")


def _refine(E, x, v, step, eq, to_x, feasible=None):
    """Pattern search on local 21-point grids of +-5 steps: keep the spacing
    while the incumbent is sliding (lands near the window edge), halve it once
    it settles, stop at relative spacing 1e-13."""
    floor = 1e-13 * (1.0 + float(np.max(np.abs(step))) * 20)
    rounds = 0
    while np.max(step) > floor:
        if rounds >= BRUTE_REFINE:
            raise ReferenceError(f"brute-force refinement did not settle in {BRUTE_REFINE} rounds")
        rounds += 1
        nx, v = _grid_min(E, x - 5 * step, x + 5 * step, 21, eq, (x, v), to_x, feasible)
        moved = np.max(np.abs(nx - x) / step)
        x = nx
        if moved < 4.0:
            step = step / 2.0
    return x, v, rounds


def _facet_min(E, V, pts):
    """Minimum of E over the simplex with vertex rows V, by a grid over the
    first k - 1 barycentric weights (the last is 1 minus their sum)."""
    k = len(V)
    if k == 1:
        return V[0], float(E(V[0])), 0

    def to_x(W):
        return W @ V[:-1] + (1.0 - W.sum(axis=-1, keepdims=True)) * V[-1]

    def feasible(W):
        return np.all(W >= -HULL_TOL, axis=-1) & (W.sum(axis=-1) <= 1 + HULL_TOL)

    lo, hi = np.zeros(k - 1), np.ones(k - 1)
    w, v = _grid_min(E, lo, hi, pts, None, None, to_x, feasible)
    w, v, rounds = _refine(E, w, v, (hi - lo) / (pts - 1), None, to_x, feasible)
    return to_x(w[None])[0], v, rounds


def _grid_min(E, lo, hi, pts, eq, incumbent=None, to_x=None, feasible=None):
    axes = [np.linspace(l, h, pts) for l, h in zip(lo, hi)]
    P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    if eq is not None:
        P = P[_inside(eq, P)]
    if feasible is not None:
        P = P[feasible(P)]
    if P.size == 0:
        return incumbent
    vals = E.eval(P if to_x is None else to_x(P))
    i = int(np.argmin(vals))
    if incumbent is not None and incumbent[1] <= vals[i]:
        return incumbent
    return P[i], float(vals[i])


def compute_b(E: ConvexObjective, dictionary: Dictionary, algorithm: str, mode: str):
    """b_ref for a config's ``bref.mode``: analytic, brute-force or none."""
    free = algorithm in ("WGAFR", "EGAFR")
    if mode == "none":
        return None
    if mode == "analytic":
        return analytic_b(E, dictionary, free)
    if mode == "brute-force":
        return brute_force_b(E, dictionary, free)
    raise ValueError(f"unknown b_ref mode {mode!r}")


def sublevel_radius(E: ConvexObjective, level: float) -> float:
    """sup ||x||_2 over {E <= level} for quadratics, else an error."""
    if E.kind != "quadratic":
        raise ReferenceError(f"no sublevel radius for {E.kind}; supply C0 explicitly")
    f = E.params["f"]
    if level < 0:
        raise ReferenceError("empty sublevel set")
    return float(pnorm(f, 2.0)) + float(np.sqrt(level))


def default_c0(E: ConvexObjective) -> float:
    """1 + sup of ||x|| over D1 = {E <= E(0) + 1}; steps move by at most that."""
    return 1.0 + sublevel_radius(E, E(np.zeros(E.dim)) + 1.0)
