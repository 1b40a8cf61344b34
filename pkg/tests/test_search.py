import numpy as np
import pytest

from greedyco import search
from greedyco.core import (linear_objective, make_canonical_dictionary, make_random_dictionary,
                           quadratic_objective)

from oracles import free_fun, grid_min_1d, grid_min_2d, line_fun

E55 = quadratic_objective([0.5, 0.5])
D2 = make_canonical_dictionary(2)
e1, e2 = np.eye(2)


# -- weak argmax ----------------------------------------------------------------

def test_frank_wolfe_tie_goes_to_lowest_index():
    # -E' = (1, 1): e1 and e2 both score 1
    c = search.weak_argmax_frank_wolfe(np.array([-1.0, -1.0]), D2, 1.0)
    assert c.index == 0 and c.score == 1.0 and not c.stationary


def test_frank_wolfe_threshold_scan():
    c = search.weak_argmax_frank_wolfe(np.array([-1.0, -1.0]), D2, 0.9)
    assert c.index == 0 and c.score == 1.0


def test_frank_wolfe_threshold_skips_low_atoms():
    # -E' = (0.5, 1): e1 scores 0.5 < 0.9, e2 scores 1
    c = search.weak_argmax_frank_wolfe(np.array([-0.5, -1.0]), D2, 0.9)
    assert c.index == 2
    c = search.weak_argmax_frank_wolfe(np.array([-0.5, -1.0]), D2, 0.5)
    assert c.index == 0


def test_zero_gradient_is_stationary():
    for t in (1.0, 0.3):
        c = search.weak_argmax_frank_wolfe(np.zeros(2), D2, t)
        assert c.stationary and c.index == 0 and c.score == 0.0
        c = search.weak_argmax_relative(np.zeros(2), np.array([0.2, 0.1]), D2, t)
        assert c.stationary and c.index == 0


def test_relative_at_zero_matches_frank_wolfe():
    g = np.array([0.3, -1.2])
    for t in (1.0, 0.5):
        a = search.weak_argmax_frank_wolfe(g, D2, t)
        b = search.weak_argmax_relative(g, np.zeros(2), D2, t)
        assert (a.index, a.score) == (b.index, b.score)


def test_relative_example():
    # G = (0.5, 0), -E' = (0, 1): scores over e1, -e1, e2, -e2 are 0, 0, 1, -1
    c = search.weak_argmax_relative(np.array([0.0, -1.0]), np.array([0.5, 0.0]), D2, 1.0)
    assert c.index == 2 and c.score == 1.0
    scores = D2.atoms @ np.array([0.0, 1.0]) - np.array([0.0, 1.0]) @ np.array([0.5, 0.0])
    assert c.score >= scores.max()


# -- line search ------------------------------------------------------------------

def test_line_search_first_step():
    r = search.line_search_unit_interval(E55, np.zeros(2), e1, 0.0)
    lam_o, val_o = grid_min_1d(line_fun(E55, np.zeros(2), e1), 0, 1)
    assert abs(r.lam - 0.5) <= 1e-7
    assert r.value == pytest.approx(0.25, abs=1e-12)
    assert r.value <= val_o + 1e-12


def test_line_search_second_step():
    G = np.array([0.5, 0.0])
    r = search.line_search_unit_interval(E55, G, e2, 0.0)
    lam_o, val_o = grid_min_1d(line_fun(E55, G, e2), 0, 1)
    # 1.25 lam^2 - lam + 0.25 has its minimum 0.05 at lam = 0.4
    assert lam_o == pytest.approx(0.4, abs=1e-6)
    assert abs(r.lam - 0.4) <= 1e-7
    assert r.value == pytest.approx(0.05, abs=1e-12)
    assert r.value <= val_o + 1e-12


def test_line_search_zero_direction():
    G = np.array([1.0, 0.0])
    r = search.line_search_unit_interval(E55, G, e1, 0.0)
    assert r.value == E55(G) and r.gap == 0.0


def test_line_search_respects_target_gap():
    G = np.array([0.5, 0.0])
    for target in (1e-2, 1e-4, 1e-8):
        r = search.line_search_unit_interval(E55, G, e2, target)
        assert r.gap <= target
        assert r.value - 0.05 <= r.gap + 1e-15


def test_line_search_boundary_minimum():
    # minimum of E along the segment is at lam = 1
    E = quadratic_objective([3.0, 0.0])
    r = search.line_search_unit_interval(E, np.zeros(2), e1, 0.0)
    assert r.lam == pytest.approx(1.0, abs=1e-12) and r.value == pytest.approx(4.0)


def test_line_search_nonfinite_reports_parameter():
    from greedyco.core import ConvexObjective
    bad = ConvexObjective("bad", {}, lambda x: np.where(np.asarray(x)[..., 0] > 0.5, np.nan, 0.0),
                          None, 2)
    with pytest.raises(search.SearchError) as info:
        search.line_search_unit_interval(bad, np.zeros(2), e1, 0.0)
    assert info.value.param is not None and info.value.param > 0.5


# -- free relaxation -------------------------------------------------------------

def test_free_relaxation_example():
    G = np.array([0.5, 0.0])
    r = search.free_relaxation_search(E55, G, e2, 0.0, 4.0)
    w_o, l_o, v_o = grid_min_2d(free_fun(E55, G, e2), -4, 4)
    assert abs(r.w) <= 1e-6 and abs(r.lam - 0.5) <= 1e-6
    assert r.value <= 1e-12
    assert r.value <= v_o + 1e-6


def test_free_relaxation_from_zero():
    E = quadratic_objective([0.3, 0.0])
    r = search.free_relaxation_search(E, np.zeros(2), e1, 0.0, 4.0)
    assert r.value <= 1e-8 and r.lam == pytest.approx(0.3, abs=1e-6)


def test_free_relaxation_gap_within_target():
    rng = np.random.default_rng(5)
    for _ in range(10):
        E = quadratic_objective(rng.normal(size=2))
        G = rng.normal(size=2) * 0.5
        r = search.free_relaxation_search(E, G, e2, 0.1, 4.0)
        assert r.gap <= 0.1


def test_free_relaxation_grows_box():
    # optimum at lam = 10 needs W >= 10
    E = quadratic_objective([10.0, 0.0])
    r = search.free_relaxation_search(E, np.zeros(2), e1, 0.0, 1.0)
    assert r.lam == pytest.approx(10.0, abs=1e-6) and r.box >= 16


def test_free_relaxation_unbounded():
    E = linear_objective([1.0, 0.0])
    with pytest.raises(search.UnboundedDirectionError):
        search.free_relaxation_search(E, np.array([0.0, 1.0]), e1, 0.0, 1.0)


def test_free_relaxation_rejects_small_box():
    with pytest.raises(ValueError):
        search.free_relaxation_search(E55, np.zeros(2), e1, 0.0, 0.5)


# -- joint searches ----------------------------------------------------------------

def test_joint_line_search_first_step():
    r = search.joint_dict_line_search(E55, np.zeros(2), D2, 0.0)
    assert r.atom == 0 and r.value == pytest.approx(0.25, abs=1e-12)
    per_atom = [grid_min_1d(line_fun(E55, np.zeros(2), g), 0, 1)[1] for g in D2.atoms]
    assert r.value <= min(per_atom) + 1e-12


def test_joint_line_search_at_optimum():
    E = quadratic_objective([0.3, 0.2])
    G = np.array([0.3, 0.2])
    r = search.joint_dict_line_search(E, G, D2, 0.0)
    assert r.value == E(G) == 0.0 and r.lam == 0.0


def test_joint_line_search_single_pair():
    E = quadratic_objective([0.3])
    r = search.joint_dict_line_search(E, np.zeros(1), make_canonical_dictionary(1), 0.0)
    assert r.atom == 0 and r.lam == pytest.approx(0.3, abs=1e-7) and r.value <= 1e-14


def test_joint_line_search_target_gap():
    d = make_random_dictionary(3, 12, seed=4)
    E = quadratic_objective([0.2, -0.1, 0.3])
    G = 0.4 * d.atoms[3]
    exact = min(grid_min_1d(line_fun(E, G, g), 0, 1, 200_001)[1] for g in d.atoms)
    for target in (1e-2, 1e-5):
        r = search.joint_dict_line_search(E, G, d, target)
        assert r.gap <= target
        assert r.value - exact <= target + 1e-9


def test_joint_free_search_example():
    G = np.array([0.5, 0.0])
    r = search.joint_dict_free_search(E55, G, D2, 0.0, 4.0)
    assert r.value <= 1e-10
    assert r.atom == 2 and abs(r.w) <= 1e-6 and r.lam == pytest.approx(0.5, abs=1e-6)


def test_joint_free_search_at_optimum():
    E = quadratic_objective([0.2, 0.7])
    r = search.joint_dict_free_search(E, np.array([0.2, 0.7]), D2, 0.0, 4.0)
    assert r.value == 0.0 and r.w == 0.0 and r.lam == 0.0


def test_joint_free_search_leaves_hull():
    E = quadratic_objective([2.0])
    r = search.joint_dict_free_search(E, np.zeros(1), make_canonical_dictionary(1), 0.0, 2.0)
    assert r.atom == 0 and r.lam == pytest.approx(2.0, abs=1e-7) and r.value <= 1e-12


# -- error model --------------------------------------------------------------------

def test_error_mode_zero_delta_identity():
    r = search.line_search_unit_interval(E55, np.zeros(2), e1, 0.0)
    rng = np.random.default_rng(0)
    assert search.apply_error_mode(r, 0.0, "tolerance", rng) is r
    assert search.apply_error_mode(r, 0.0, "inject", rng) is r


def test_inject_lands_in_band():
    G = np.array([0.5, 0.0])
    r = search.line_search_unit_interval(E55, G, e2, 0.0)
    _, exact = grid_min_1d(line_fun(E55, G, e2), 0, 1)
    out = search.apply_error_mode(r, 0.01, "inject", np.random.default_rng(3))
    assert 0.005 <= out.value - exact <= 0.01 + 1e-12
    assert out.injected == pytest.approx(out.value - r.value)
    assert E55((1 - out.lam) * G + out.lam * e2) == pytest.approx(out.value)


def test_inject_two_parameters():
    G = np.array([0.5, 0.0])
    r = search.free_relaxation_search(E55, G, e2, 0.0, 4.0)
    out = search.apply_error_mode(r, 0.02, "inject", np.random.default_rng(4))
    assert 0.01 <= out.value - r.value <= 0.02 + 1e-12
    assert E55((1 - out.w) * G + out.lam * e2) == pytest.approx(out.value)


def test_inject_flat_direction():
    G = np.array([1.0, 0.0])
    r = search.line_search_unit_interval(E55, G, e1, 0.0)
    out = search.apply_error_mode(r, 0.01, "inject", np.random.default_rng(0))
    assert out.flat and out.injected == 0.0 and out.value == r.value


def test_tolerance_contract_violation():
    r = search.line_search_unit_interval(E55, np.zeros(2), e1, 0.1)
    assert r.gap <= 0.1
    with pytest.raises(search.ContractViolation):
        search.apply_error_mode(r.__class__(**{**r.__dict__, "gap": 0.5}), 0.1, "tolerance",
                                np.random.default_rng(0))
