import numpy as np
from hypothesis import given, settings, strategies as st

from greedyco import analysis, harness, search
from greedyco.core import (make_random_dictionary, pdistance_objective, pnorm,
                           quadratic_objective)

from oracles import grid_min_1d, line_fun

SETTINGS = settings(max_examples=60, deadline=None)
finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
weakness = st.floats(0.05, 1.0)


@st.composite
def dictionaries(draw, max_dim=4):
    n = draw(st.integers(1, max_dim))
    k = 2 * draw(st.integers(1, 6))
    p = draw(st.sampled_from([1.0, 1.5, 2.0, np.inf]))
    return make_random_dictionary(n, k, p=p, seed=draw(st.integers(0, 10_000)))


@st.composite
def dict_and_vector(draw):
    d = draw(dictionaries())
    v = np.array(draw(st.lists(finite, min_size=d.dim, max_size=d.dim)))
    return d, v


@SETTINGS
@given(dictionaries())
def test_dictionary_symmetric_and_normalized(d):
    np.testing.assert_array_equal(d.atoms + d.atoms[d.pairing], 0.0)
    assert np.all(d.pairing[d.pairing] == np.arange(len(d)))
    assert np.all(np.abs(pnorm(d.atoms, d.p) - 1) <= 1e-12)


@SETTINGS
@given(dict_and_vector())
def test_exact_argmax_matches_scan(dv):
    d, g = dv
    c = search.weak_argmax_frank_wolfe(g, d, 1.0)
    scores = d.atoms @ -g
    if not c.stationary:
        assert c.score == scores.max()
        assert c.index == int(np.argmax(scores))


@SETTINGS
@given(dict_and_vector(), weakness, weakness)
def test_weak_argmax_threshold_and_monotone_in_t(dv, t1, t2):
    d, g = dv
    lo, hi = sorted((t1, t2))
    a = search.weak_argmax_frank_wolfe(g, d, lo)
    b = search.weak_argmax_frank_wolfe(g, d, hi)
    best = (d.atoms @ -g).max()
    if a.stationary:
        return
    assert a.score >= lo * best - 1e-12 and b.score >= hi * best - 1e-12
    # raising t can only move the lowest qualifying index later
    assert a.index <= b.index


@SETTINGS
@given(st.lists(finite, min_size=2, max_size=2), st.lists(finite, min_size=2, max_size=2),
       st.integers(0, 3), st.sampled_from([0.0, 1e-6, 1e-3, 0.1]),
       st.sampled_from(["quadratic", "pdistance"]))
def test_line_search_gap_is_sound(f, G, atom, target, kind):
    E = quadratic_objective(f) if kind == "quadratic" else pdistance_objective(f, 1.5)
    phi = np.array([[1.0, 0], [-1.0, 0], [0, 1.0], [0, -1.0]])[atom]
    G = np.array(G) * 0.3
    r = search.line_search_unit_interval(E, G, phi, target)
    _, exact = grid_min_1d(line_fun(E, G, phi), 0, 1, 20_001)
    assert r.gap <= max(target, search.floor_gap(r.value)) + 1e-15
    assert r.value - exact <= r.gap + 1e-12
    assert np.isclose(r.value, E((1 - r.lam) * G + r.lam * phi), rtol=1e-12, atol=1e-15)


@SETTINGS
@given(st.lists(finite, min_size=2, max_size=2), st.integers(0, 10_000),
       st.floats(1e-6, 0.5))
def test_inject_bounds(f, seed, delta):
    E = quadratic_objective(f)
    G = np.array([0.2, -0.1])
    phi = np.array([0.0, 1.0])
    r = search.line_search_unit_interval(E, G, phi, 0.0)
    out = search.apply_error_mode(r, delta, "inject", np.random.default_rng(seed))
    assert out.value >= r.value
    assert out.value - r.value <= delta + 1e-12
    assert 0.0 <= out.lam <= 1.0


@SETTINGS
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=30).map(sorted).filter(
    lambda xs: np.min(np.diff(xs)) > 1e-3), finite, finite, st.floats(0, 3))
def test_convex_lower_bound_is_sound(xs, c, s, k):
    xs = np.array(xs)
    f = lambda x: k * (x - c) ** 2 + abs(x - s)
    bound = search.convex_lower_bound(xs, f(xs))
    dense = np.linspace(xs[0], xs[-1], 20_001)
    assert bound <= f(dense).min() + 1e-12


@SETTINGS
@given(st.floats(0.01, 1.0), st.floats(0.1, 50), st.floats(1.05, 2.0), st.floats(0, 20),
       st.floats(0, 20))
def test_majorant_step_monotone(v, B, q, a, b):
    lo, hi = sorted((a, b))
    assert analysis.majorant_step(lo, v, B, q) <= analysis.majorant_step(hi, v, B, q) + 1e-12
    assert analysis.majorant_step(lo, v, B, q) <= lo + 1e-15


@st.composite
def configs(draw):
    n = draw(st.integers(1, 3))
    alg = draw(st.sampled_from(["WRGA", "REGA", "WGAFR", "EGAFR"]))
    kw = dict(objective_kind=draw(st.sampled_from(["quadratic", "pdistance"])), algorithm=alg,
              f=tuple(draw(st.lists(finite, min_size=n, max_size=n))),
              power=draw(st.floats(1.01, 2.0)), t=draw(st.floats(0.01, 1.0)),
              error_mode=draw(st.sampled_from(["tolerance", "inject"])),
              max_iterations=draw(st.integers(0, 5000)), seed=draw(st.integers(0, 2 ** 31)),
              bref_mode=draw(st.sampled_from(["analytic", "brute-force", "none"])),
              wmax=draw(st.floats(1.0, 100.0)), majorant=draw(st.booleans()))
    kind = draw(st.sampled_from(["zero", "constant", "power", "harmonic"]))
    kw["schedule_kind"] = kind
    if kind == "constant":
        kw["schedule_delta"] = draw(st.floats(0.0, 1.0))
    elif kind != "zero":
        kw["schedule_c"] = draw(st.floats(0.0, 1.0))
        kw["schedule_q"] = draw(st.floats(1.01, 2.0))
    if draw(st.booleans()):
        kw.update(dictionary_kind="random", dictionary_count=2 * draw(st.integers(1, 10)),
                  dictionary_seed=draw(st.integers(0, 1000)))
    return harness.ExperimentConfig(**kw)


@SETTINGS
@given(configs())
def test_config_round_trip(c):
    back = harness.parse_config_text(harness.serialize_config(c))
    assert back == c and back.config_hash == c.config_hash
