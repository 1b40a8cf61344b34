"""The four greedy loops: WRGA, REGA, WGAFR and EGAFR.

Each run starts from G_0 = 0 and performs ``config.max_iterations`` steps.
Step m searches with error budget delta_{m-1} and then applies the
configured error mode. WRGA and REGA update by convex combination
(1 - lam) G + lam phi and so stay in the convex hull of the dictionary;
WGAFR and EGAFR use the free relaxation (1 - w) G + lam phi.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import search
from .core import (AlgorithmConfig, ConvexObjective, Dictionary, Expansion, GreedyError,
                   IterationRecord, RunTrace)


class IterationError(GreedyError):
    """A search failed inside a run; ``trace`` holds the iterations completed so far."""

    def __init__(self, m: int, cause: Exception, trace: RunTrace):
        super().__init__(f"iteration {m}: {cause}")
        self.m = m
        self.cause = cause
        self.trace = trace


@dataclass(frozen=True)
class GreedyState:
    m: int
    G: Expansion
    value: float
    grad: Optional[np.ndarray] = None


def _start(obj, dictionary, config, b_ref, need_grad):
    if obj.dim != dictionary.dim:
        raise ValueError(f"objective dimension {obj.dim} != dictionary dimension {dictionary.dim}")
    if need_grad and obj.grad is None:
        raise ValueError(f"{config.algorithm} needs the gradient of E")
    G0 = Expansion.zero(dictionary)
    v0 = obj(G0.vector)
    header = {
        "config": config.describe(),
        "objective": obj.describe(),
        "dictionary": {"count": len(dictionary), "n": dictionary.dim, "p": dictionary.p},
    }
    start = IterationRecord(0, None, None, None, v0, None if b_ref is None else v0 - b_ref,
                            0.0, 0.0, G0)
    trace = RunTrace(header, start, [], b_ref)
    state = GreedyState(0, G0, v0, obj.grad(G0.vector) if need_grad else None)
    return trace, state


def _record(trace, m, index, lam, w, G, value, delta, injected, stationary=False):
    a = None if trace.b_ref is None else value - trace.b_ref
    trace.records.append(IterationRecord(m, index, lam, w, value, a, delta, injected, G,
                                         stationary))


def _search_target(config, delta):
    # inject mode searches exactly and adds the error afterwards
    return delta if config.error_mode == "tolerance" else 0.0


def _run(obj, dictionary, config, b_ref, step, need_grad):
    trace, state = _start(obj, dictionary, config, b_ref, need_grad)
    rng = np.random.default_rng(config.seed)
    stopped = False
    for m in range(1, config.max_iterations + 1):
        delta = config.schedule(m - 1)
        if stopped:
            _record(trace, m, None, 0.0, 0.0 if config.algorithm in ("WGAFR", "EGAFR") else None,
                    state.G, state.value, delta, 0.0, True)
            continue
        try:
            out = step(state, m, delta, rng)
        except (search.SearchError, search.UnboundedDirectionError,
                search.ContractViolation) as exc:
            trace.aborted = True
            trace.error = f"iteration {m}: {exc}"
            raise IterationError(m, exc, trace) from exc
        if out is None:
            # stationary point: G_m = G_{m-1} from here on
            stopped = True
            _record(trace, m, None, 0.0, 0.0 if config.algorithm in ("WGAFR", "EGAFR") else None,
                    state.G, state.value, delta, 0.0, True)
            continue
        index, lam, w, result = out
        G = state.G.relax(lam, index) if w is None else state.G.free_relax(w, lam, index)
        value = obj(G.vector)
        _record(trace, m, index, lam, w, G, value, delta, result.injected)
        state = GreedyState(m, G, value, obj.grad(G.vector) if need_grad else None)
    return trace


def run_wrga(obj: ConvexObjective, dictionary: Dictionary, config: AlgorithmConfig,
             b_ref: Optional[float] = None) -> RunTrace:
    """Weak Relaxed Greedy Algorithm, exact or with errors delta_k.

    (1) phi_m with <-E'(G), phi_m - G> >= t_m sup_g <-E'(G), g - G>;
    (2) lam_m in [0, 1] within delta_{m-1} of the best convex combination.
    """

    def step(state, m, delta, rng):
        choice = search.weak_argmax_relative(state.grad, state.G.vector, dictionary, config.t(m))
        if choice.stationary:
            return None
        r = search.line_search_unit_interval(obj, state.G.vector, dictionary[choice.index],
                                             _search_target(config, delta))
        r = search.apply_error_mode(r, delta, config.error_mode, rng)
        return choice.index, r.lam, None, r

    return _run(obj, dictionary, config, b_ref, step, need_grad=True)


def run_rega(obj: ConvexObjective, dictionary: Dictionary, config: AlgorithmConfig,
             b_ref: Optional[float] = None) -> RunTrace:
    """Relaxed E-Greedy Algorithm: joint search over atoms and lam in [0, 1]
    using values of E only."""

    def step(state, m, delta, rng):
        r = search.joint_dict_line_search(obj, state.G.vector, dictionary,
                                          _search_target(config, delta))
        r = search.apply_error_mode(r, delta, config.error_mode, rng)
        return r.atom, r.lam, None, r

    return _run(obj, dictionary, config, b_ref, step, need_grad=False)


def run_wgafr(obj: ConvexObjective, dictionary: Dictionary, config: AlgorithmConfig,
              b_ref: Optional[float] = None) -> RunTrace:
    """Weak Greedy Algorithm with Free Relaxation.

    (1) phi_m with <-E'(G), phi_m> >= t_m sup_g <-E'(G), g>;
    (2) (w_m, lam_m) within delta_{m-1} of inf E((1 - w) G + lam phi_m).
    """

    def step(state, m, delta, rng):
        choice = search.weak_argmax_frank_wolfe(state.grad, dictionary, config.t(m))
        if choice.stationary:
            return None
        r = search.free_relaxation_search(obj, state.G.vector, dictionary[choice.index],
                                          _search_target(config, delta), config.w_max)
        r = search.apply_error_mode(r, delta, config.error_mode, rng)
        return choice.index, r.lam, r.w, r

    return _run(obj, dictionary, config, b_ref, step, need_grad=True)


def run_egafr(obj: ConvexObjective, dictionary: Dictionary, config: AlgorithmConfig,
              b_ref: Optional[float] = None) -> RunTrace:
    """E-Greedy Algorithm with Free Relaxation: joint search over atoms and
    (w, lam) using values of E only."""

    def step(state, m, delta, rng):
        r = search.joint_dict_free_search(obj, state.G.vector, dictionary,
                                          _search_target(config, delta), config.w_max)
        r = search.apply_error_mode(r, delta, config.error_mode, rng)
        return r.atom, r.lam, r.w, r

    return _run(obj, dictionary, config, b_ref, step, need_grad=False)


RUNNERS = {"WRGA": run_wrga, "REGA": run_rega, "WGAFR": run_wgafr, "EGAFR": run_egafr}


def run(obj: ConvexObjective, dictionary: Dictionary, config: AlgorithmConfig,
        b_ref: Optional[float] = None) -> RunTrace:
    return RUNNERS[config.algorithm](obj, dictionary, config, b_ref)
