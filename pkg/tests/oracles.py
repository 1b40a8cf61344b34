"""Brute-force references used by the tests. Deliberately naive."""
import numpy as np


def grid_min_1d(fun, lo, hi, points=1_000_001):
    """Dense grid minimum of a vectorized 1-D function, refined once around the best cell."""
    x = np.linspace(lo, hi, points)
    v = fun(x)
    i = int(np.argmin(v))
    a, b = x[max(i - 1, 0)], x[min(i + 1, points - 1)]
    x2 = np.linspace(a, b, 10_001)
    v2 = fun(x2)
    j = int(np.argmin(v2))
    if v2[j] < v[i]:
        return float(x2[j]), float(v2[j])
    return float(x[i]), float(v[i])


def grid_min_2d(fun, lo, hi, points=2000):
    """2000 x 2000 grid minimum of fun(W, L) over [lo, hi]^2, refined once."""
    g = np.linspace(lo, hi, points)
    W, L = np.meshgrid(g, g, indexing="ij")
    V = fun(W, L)
    i, j = np.unravel_index(int(np.argmin(V)), V.shape)
    best = (float(W[i, j]), float(L[i, j]), float(V[i, j]))
    h = g[1] - g[0]
    g2w = np.linspace(W[i, j] - h, W[i, j] + h, 401)
    g2l = np.linspace(L[i, j] - h, L[i, j] + h, 401)
    W2, L2 = np.meshgrid(g2w, g2l, indexing="ij")
    V2 = fun(W2, L2)
    k, m = np.unravel_index(int(np.argmin(V2)), V2.shape)
    if V2[k, m] < best[2]:
        best = (float(W2[k, m]), float(L2[k, m]), float(V2[k, m]))
    return best


def line_fun(E, G, phi):
    d = np.asarray(phi, float) - np.asarray(G, float)
    return lambda lam: E.eval(np.asarray(G, float) + np.multiply.outer(lam, d))


def free_fun(E, G, phi):
    G = np.asarray(G, float)
    phi = np.asarray(phi, float)
    return lambda w, lam: E.eval(np.multiply.outer(1 - w, G) + np.multiply.outer(lam, phi))


def grid_min_2d_pattern(fun, lo, hi, points=201, floor=1e-11):
    """Coarse grid over [lo, hi]^2, then local 21 x 21 grids of +-5 steps that
    follow the incumbent and halve their spacing once it stops moving."""
    g = np.linspace(lo, hi, points)
    W, L = np.meshgrid(g, g, indexing="ij")
    V = fun(W, L)
    i, j = np.unravel_index(int(np.argmin(V)), V.shape)
    x, v = np.array([W[i, j], L[i, j]]), float(V[i, j])
    h = g[1] - g[0]
    while h > floor:
        gw = np.clip(np.linspace(x[0] - 5 * h, x[0] + 5 * h, 21), lo, hi)
        gl = np.clip(np.linspace(x[1] - 5 * h, x[1] + 5 * h, 21), lo, hi)
        W2, L2 = np.meshgrid(gw, gl, indexing="ij")
        V2 = fun(W2, L2)
        k, m = np.unravel_index(int(np.argmin(V2)), V2.shape)
        moved = 0.0
        if V2[k, m] < v:
            nx = np.array([W2[k, m], L2[k, m]])
            moved = float(np.max(np.abs(nx - x))) / h
            x, v = nx, float(V2[k, m])
        if moved < 4.0:
            h /= 2.0
    return float(x[0]), float(x[1]), v
