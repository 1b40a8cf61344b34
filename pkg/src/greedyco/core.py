"""Shared domain types: dictionaries, coefficient expansions, objectives,
run configuration and run traces.

Everything here is immutable after construction. Vectors are plain float64
numpy arrays; constructors reject non-finite entries.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

UNIT_NORM_TOL = 1e-12
ALGORITHMS = ("WRGA", "REGA", "WGAFR", "EGAFR")
ERROR_MODES = ("tolerance", "inject")


class GreedyError(Exception):
    """Base class for errors raised by this package."""


class InvalidDimensionError(GreedyError, ValueError):
    pass


class ConfigError(GreedyError, ValueError):
    pass


def as_vector(x, name: str = "vector") -> np.ndarray:
    v = np.array(x, dtype=float).reshape(-1)
    if v.size == 0:
        raise InvalidDimensionError(f"{name} must have dimension >= 1")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries: {v}")
    v.setflags(write=False)
    return v


def pnorm(x: np.ndarray, p: float, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.isinf(p):
        return np.max(np.abs(x), axis=axis)
    if p == 1:
        return np.sum(np.abs(x), axis=axis)
    if p == 2:
        return np.sqrt(np.sum(x * x, axis=axis))
    return np.sum(np.abs(x) ** p, axis=axis) ** (1.0 / p)


def dual_exponent(p: float) -> float:
    if p == 1:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1.0)


def _check_p(p: float) -> float:
    p = float(p)
    if not (p >= 1.0):
        raise ConfigError(f"norm exponent p must be in [1, inf], got {p}")
    return p


# ---------------------------------------------------------------------------
# dictionaries

class Dictionary:
    """Finite symmetric dictionary of unit-norm atoms in R^n.

    ``pairing[i]`` is the index of ``-atoms[i]``.
    """

    def __init__(self, atoms, pairing, p: float = 2.0):
        atoms = np.array(atoms, dtype=float)
        if atoms.ndim != 2 or atoms.shape[1] < 1:
            raise InvalidDimensionError("atoms must be a (count, n) array with n >= 1")
        if atoms.shape[0] < 2 or atoms.shape[0] % 2:
            raise ValueError(f"atom count must be even and >= 2, got {atoms.shape[0]}")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        p = _check_p(p)
        norms = pnorm(atoms, p)
        if np.max(np.abs(norms - 1.0)) > UNIT_NORM_TOL:
            raise ValueError(f"atoms are not unit norm in l{p}: {norms}")
        pairing = np.array(pairing, dtype=int)
        k = atoms.shape[0]
        if pairing.shape != (k,) or np.any(pairing[pairing] != np.arange(k)):
            raise ValueError("pairing must be an involution on atom indices")
        if np.any(pairing == np.arange(k)) or not np.array_equal(atoms[pairing], -atoms):
            raise ValueError("dictionary is not symmetric")
        atoms.setflags(write=False)
        pairing.setflags(write=False)
        self.atoms = atoms
        self.pairing = pairing
        self.p = p

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def __len__(self) -> int:
        return self.atoms.shape[0]

    def __getitem__(self, i: int) -> np.ndarray:
        return self.atoms[i]

    def __repr__(self) -> str:
        return f"Dictionary(count={len(self)}, n={self.dim}, p={self.p})"


def _paired(directions: np.ndarray, p: float) -> Dictionary:
    # interleave g, -g so that pairing is (0,1), (2,3), ...
    k = directions.shape[0]
    atoms = np.empty((2 * k, directions.shape[1]))
    atoms[0::2] = directions
    atoms[1::2] = -directions
    pairing = np.arange(2 * k) ^ 1
    return Dictionary(atoms, pairing, p)


def make_canonical_dictionary(n: int, p: float = 2.0) -> Dictionary:
    """The atoms +e_1, -e_1, ..., +e_n, -e_n (unit in every p-norm)."""
    if int(n) < 1:
        raise InvalidDimensionError(f"dimension must be >= 1, got {n}")
    return _paired(np.eye(int(n)), p)


def make_random_dictionary(n: int, count: int, p: float = 2.0, seed: int = 0) -> Dictionary:
    """``count // 2`` Gaussian directions normalized in l_p, each with its negation."""
    if int(n) < 1:
        raise InvalidDimensionError(f"dimension must be >= 1, got {n}")
    if count < 2 or count % 2:
        raise ValueError(f"atom count must be even and >= 2, got {count}")
    p = _check_p(p)
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((count // 2, int(n)))
    dirs /= pnorm(dirs, p)[:, None]
    return _paired(dirs, p)


# ---------------------------------------------------------------------------
# expansions

class Expansion:
    """An iterate stored both as a vector and as atom coefficients.

    Coefficients are kept densely, one per atom. Updates act on both
    representations so the vector never has to be re-derived.
    """

    __slots__ = ("dictionary", "coeffs", "vector")

    def __init__(self, dictionary: Dictionary, coeffs=None, vector=None):
        self.dictionary = dictionary
        if coeffs is None:
            coeffs = np.zeros(len(dictionary))
        coeffs = np.array(coeffs, dtype=float)
        if vector is None:
            vector = coeffs @ dictionary.atoms
        vector = np.array(vector, dtype=float)
        coeffs.setflags(write=False)
        vector.setflags(write=False)
        self.coeffs = coeffs
        self.vector = vector

    @classmethod
    def zero(cls, dictionary: Dictionary) -> "Expansion":
        return cls(dictionary, np.zeros(len(dictionary)), np.zeros(dictionary.dim))

    @property
    def pairs(self) -> list[tuple[int, float]]:
        return [(int(i), float(self.coeffs[i])) for i in np.flatnonzero(self.coeffs)]

    @property
    def l1_weight(self) -> float:
        return float(np.sum(np.abs(self.coeffs)))

    def materialize(self) -> np.ndarray:
        return self.coeffs @ self.dictionary.atoms

    def relax(self, lam: float, index: int) -> "Expansion":
        """(1 - lam) * G + lam * atoms[index]."""
        return self.free_relax(lam, lam, index)

    def free_relax(self, w: float, lam: float, index: int) -> "Expansion":
        """(1 - w) * G + lam * atoms[index]."""
        c = (1.0 - w) * self.coeffs
        c[index] += lam
        v = (1.0 - w) * self.vector + lam * self.dictionary.atoms[index]
        return Expansion(self.dictionary, c, v)


# ---------------------------------------------------------------------------
# objectives

@dataclass(frozen=True)
class SmoothnessCertificate:
    """Declared bound rho(E, S, u) <= gamma * u**q on the domain ``domain``.

    ``domain`` is "D" for {E <= E(0)} or "D1" for {E <= E(0) + 1}.
    """

    gamma: float
    q: float
    domain: str = "D"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not 1 < self.q <= 2:
            raise ValueError(f"q must be in (1, 2], got {self.q}")
        if self.domain not in ("D", "D1"):
            raise ValueError(f"unknown certificate domain {self.domain!r}")

    @property
    def p(self) -> float:
        return self.q / (self.q - 1.0)


@dataclass(frozen=True, eq=False)
class ConvexObjective:
    """A convex function with gradient.

    ``eval`` and ``grad`` accept a single point of shape (n,) or a batch of
    shape (k, n); ``eval`` then returns shape () or (k,).
    """

    kind: str
    params: dict
    eval: Callable[[np.ndarray], np.ndarray]
    grad: Optional[Callable[[np.ndarray], np.ndarray]]
    dim: int
    smoothness: Optional[SmoothnessCertificate] = None
    # known minimizer over R^n, if any
    argmin: Optional[np.ndarray] = None

    def __call__(self, x) -> float:
        return float(self.eval(np.asarray(x, dtype=float)))

    def describe(self) -> dict:
        d = {"kind": self.kind, "dim": self.dim}
        for k, v in self.params.items():
            d[k] = np.asarray(v).tolist()
        if self.smoothness is not None:
            d["gamma"] = self.smoothness.gamma
            d["q"] = self.smoothness.q
        return d

    def with_domain(self, domain: str) -> "ConvexObjective":
        if self.smoothness is None:
            return self
        cert = SmoothnessCertificate(self.smoothness.gamma, self.smoothness.q, domain)
        return ConvexObjective(self.kind, self.params, self.eval, self.grad, self.dim,
                               cert, self.argmin)


def _norm_factor(n: int, r: float, p: float) -> float:
    """sup of ||y||_r**r over ||y||_p = 1 in R^n, for r <= 2."""
    return float(n) ** max(0.0, 1.0 - r / p)


def quadratic_objective(f, p: float = 2.0) -> ConvexObjective:
    """E(x) = ||x - f||_2^2, whose modulus of smoothness is u^2 sup ||y||_2^2.

    With the Euclidean norm the certificate is exactly (gamma=1, q=2); for
    other norms gamma picks up the dimension factor of the norm comparison.
    """
    f = as_vector(f, "f")
    n = f.size

    def ev(x):
        d = x - f
        return np.sum(d * d, axis=-1)

    def gr(x):
        return 2.0 * (x - f)

    cert = SmoothnessCertificate(_norm_factor(n, 2.0, p), 2.0)
    return ConvexObjective("quadratic", {"f": f}, ev, gr, n, cert, argmin=f)


def pdistance_objective(f, power: float, p: float = 2.0) -> ConvexObjective:
    """E(x) = sum_i |x_i - f_i|^r with r = ``power`` in (1, 2].

    The scalar inequality |s+a|^r + |s-a|^r - 2|s|^r <= 2|a|^r (r <= 2) gives
    rho(u) <= u^r ||y||_r^r, hence q = r.
    """
    f = as_vector(f, "f")
    r = float(power)
    if not 1 < r <= 2:
        raise ValueError(f"power must be in (1, 2], got {r}")
    n = f.size

    def ev(x):
        return np.sum(np.abs(x - f) ** r, axis=-1)

    def gr(x):
        d = x - f
        return r * np.sign(d) * np.abs(d) ** (r - 1.0)

    cert = SmoothnessCertificate(_norm_factor(n, r, p), r)
    return ConvexObjective("pdistance", {"f": f, "power": r}, ev, gr, n, cert, argmin=f)


def logsumexp_objective(a, b=None, mu: float = 0.0, p: float = 2.0) -> ConvexObjective:
    """E(x) = log sum_j exp(<a_j, x> - b_j) + (mu / 2) ||x||_2^2.

    The Hessian quadratic form is bounded by max_j <a_j, y>^2 + mu ||y||_2^2,
    which yields a q = 2 certificate.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1:
        raise ValueError("a must be a nonempty (rows, n) matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("a must be finite")
    b = np.zeros(a.shape[0]) if b is None else as_vector(b, "b")
    if b.size != a.shape[0]:
        raise ValueError("b must have one entry per row of a")
    mu = float(mu)
    if mu < 0:
        raise ValueError("mu must be >= 0")
    n = a.shape[1]

    def ev(x):
        z = x @ a.T - b
        zmax = np.max(z, axis=-1, keepdims=True)
        lse = np.log(np.sum(np.exp(z - zmax), axis=-1)) + zmax[..., 0]
        return lse + 0.5 * mu * np.sum(x * x, axis=-1)

    def gr(x):
        z = x @ a.T - b
        z = z - np.max(z, axis=-1, keepdims=True)
        s = np.exp(z)
        s /= np.sum(s, axis=-1, keepdims=True)
        return s @ a + mu * x

    dual = dual_exponent(p)
    row_bound = float(np.max(pnorm(a, dual)) ** 2)
    ridge = mu * _norm_factor(n, 2.0, p)
    cert = SmoothnessCertificate(0.5 * (row_bound + ridge), 2.0)
    return ConvexObjective("logsumexp", {"a": a, "b": b, "mu": mu}, ev, gr, n, cert)


def linear_objective(c) -> ConvexObjective:
    """E(x) = <c, x>. Affine, so its modulus of smoothness is zero."""
    c = as_vector(c, "c")

    def ev(x):
        return x @ c

    def gr(x):
        return np.broadcast_to(c, np.shape(x)).copy()

    return ConvexObjective("linear", {"c": c}, ev, gr, c.size, None)


# ---------------------------------------------------------------------------
# schedules and configuration

@dataclass(frozen=True)
class ErrorSchedule:
    """The error sequence delta_k, k = 0, 1, 2, ...

    kinds: ``zero``; ``constant`` (delta); ``power`` c (k+1)^-q;
    ``harmonic`` c / (k+2).
    """

    kind: str = "zero"
    c: float = 0.0
    q: float = 2.0
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "power", "harmonic"):
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "constant" and not 0 <= self.delta <= 1:
            raise ConfigError(f"delta must be in [0,1], got {self.delta}")
        if self.kind in ("power", "harmonic") and not 0 <= self.c <= 1:
            # c (k+1)^-q and c/(k+2) stay in [0,1] iff c does (for k = 0, 1 resp.)
            raise ConfigError(f"schedule c must be in [0,1] so that delta_k is in [0,1], got {self.c}")
        if self.kind == "power" and not self.q > 0:
            raise ConfigError(f"schedule q must be > 0, got {self.q}")

    def __call__(self, k: int) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.delta
        if self.kind == "power":
            return self.c * (k + 1.0) ** (-self.q)
        return self.c / (k + 2.0)

    def values(self, count: int) -> np.ndarray:
        return np.array([self(k) for k in range(count)])

    @property
    def is_zero(self) -> bool:
        return (self.kind == "zero" or (self.kind == "constant" and self.delta == 0)
                or (self.kind in ("power", "harmonic") and self.c == 0))

    def describe(self) -> str:
        if self.kind == "zero":
            return "zero"
        if self.kind == "constant":
            return f"constant:{self.delta!r}"
        if self.kind == "power":
            return f"power:c={self.c!r},q={self.q!r}"
        return f"harmonic:c={self.c!r}"


def parse_schedule(text: str) -> ErrorSchedule:
    """Parse the short form used on the command line, e.g.
    ``zero``, ``constant:1e-4``, ``power: c=0.01, q=2``, ``harmonic:c=1``."""
    kind, _, rest = text.partition(":")
    kind = kind.strip()
    rest = rest.strip()
    if kind == "zero":
        return ErrorSchedule("zero")
    if kind == "constant":
        if "=" in rest:
            rest = rest.split("=", 1)[1]
        return ErrorSchedule("constant", delta=float(rest))
    kw = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, _, val = item.partition("=")
        key = key.strip()
        if key not in ("c", "q"):
            raise ConfigError(f"unknown schedule parameter {key!r} in {text!r}")
        kw[key] = float(val)
    return ErrorSchedule(kind, **kw)


@dataclass(frozen=True)
class AlgorithmConfig:
    algorithm: str
    weakness: float | tuple = 1.0
    schedule: ErrorSchedule = field(default_factory=ErrorSchedule)
    error_mode: str = "tolerance"
    max_iterations: int = 100
    w_max: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        ts = self.weakness if isinstance(self.weakness, tuple) else (self.weakness,)
        if not ts or any(not 0 < float(t) <= 1 for t in ts):
            raise ConfigError(f"t must be in (0,1], got {self.weakness}")
        if self.error_mode not in ERROR_MODES:
            raise ConfigError(f"error mode must be one of {ERROR_MODES}, got {self.error_mode!r}")
        if int(self.max_iterations) < 0:
            raise ConfigError("max_iterations must be >= 0")
        if not self.w_max >= 1:
            raise ConfigError(f"W_max must be >= 1, got {self.w_max}")

    def t(self, m: int) -> float:
        """Weakness t_m for m >= 1; a tuple repeats its last entry."""
        if isinstance(self.weakness, tuple):
            return float(self.weakness[min(m - 1, len(self.weakness) - 1)])
        return float(self.weakness)

    def describe(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "weakness": list(self.weakness) if isinstance(self.weakness, tuple) else self.weakness,
            "schedule": self.schedule.describe(),
            "error_mode": self.error_mode,
            "max_iterations": self.max_iterations,
            "w_max": self.w_max,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# traces

@dataclass(frozen=True)
class IterationRecord:
    m: int
    atom_index: Optional[int]
    lam: Optional[float]
    w: Optional[float]
    value: float
    a: Optional[float]
    delta: float
    injected: float
    expansion: Expansion
    stationary: bool = False

    @property
    def l1_weight(self) -> float:
        return self.expansion.l1_weight


@dataclass
class RunTrace:
    """Values E(G_0), E(G_1), ... of one run plus per-iteration records.

    ``records`` holds one entry per completed iteration (m >= 1); the
    starting point G_0 = 0 is kept in ``start``.
    """

    header: dict
    start: IterationRecord
    records: list = field(default_factory=list)
    b_ref: Optional[float] = None
    aborted: bool = False
    error: Optional[str] = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def all_records(self) -> list:
        return [self.start, *self.records]

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.all_records])

    @property
    def gaps(self) -> np.ndarray:
        """a_m = E(G_m) - b_ref for m = 0..iterations."""
        if self.b_ref is None:
            raise ValueError("trace has no reference value b_ref")
        return self.values - self.b_ref

    @property
    def deltas(self) -> np.ndarray:
        return np.array([r.delta for r in self.records])
