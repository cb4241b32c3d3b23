"""Proximal-point acceleration around the DSCOVR inner engines.

Each round freezes anchors ``(w_tilde, alpha_tilde)`` and approximately
solves the saddle problem perturbed by ``(delta lam / 2)||w - w_tilde||^2``
and ``-(delta gamma_i / 2)||alpha_i - alpha_tilde_i||^2`` with a fixed
budget of inner SVRG stages or SAGA iterations.
"""

from __future__ import annotations

import numpy as np

from .core import DIVERGENCE_FACTOR, RoundAnchor, RunResult, Tracker, _setup, run_dscovr_saga, run_dscovr_svrg
from .problem import duality_gap
from .stepsizes import accel_plan


def _inner(option, problem, plan, scheme, state, breg, rng, tracker, anchor, indices, S, M, dual, tables=None):
    kw = dict(dual=dual, breg_states=breg, rng=rng, tracker=tracker, anchor=anchor, indices=indices)
    if option == "svrg":
        return run_dscovr_svrg(problem, plan, scheme, state.w, state.alpha, S=S, M=M, **kw)
    return run_dscovr_saga(problem, plan, scheme, state.w, state.alpha, M=M, tables=tables, **kw)


def run_accelerated(problem, scheme, option="svrg", w0=None, a0=None, rounds=10, seed=0, plan=None, *,
                    dual="prox", reference=None, tol=None, hooks=(), S=None, M=None, indices=None,
                    checkpoint_every=None, track=True, divergence_factor=DIVERGENCE_FACTOR):
    """Accelerated DSCOVR with an SVRG or SAGA inner solver.

    Parameters
    ----------
    option : {"svrg", "saga"}
        Inner engine.
    rounds : int
        Number of outer rounds (fewer if ``tol`` is reached first).
    plan : StepSizePlan, optional
        Defaults to :func:`accel_plan`; its ``delta`` sets the perturbation.
    tol : float, optional
        Stop after the first round whose duality gap is below ``tol``.
    indices : list of arrays, optional
        Per-round ``(j, l)`` sequences to replay instead of sampling.

    When ``delta == 0`` the outer loop degenerates: a single unperturbed
    round is run, whose budget is ``rounds`` times the per-round budget.
    """
    if option not in ("svrg", "saga"):
        raise ValueError("option must be 'svrg' or 'saga'")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    plan = accel_plan(problem, scheme, option) if plan is None else plan
    delta = float(plan.delta or 0.0)
    S = plan.S if S is None else S
    M = plan.M if M is None else M
    if option == "svrg" and S is None:
        S = 1

    state, breg, rng = _setup(problem, w0, a0, dual, None, seed, None)
    tracker = Tracker(problem, reference, hooks, track, checkpoint_every, divergence_factor)
    tracker.record(state, "start")
    logs = []
    stamps = []

    if delta == 0.0:
        idx = None if indices is None else indices[0]
        if option == "svrg":
            res = _inner(option, problem, plan, scheme, state, breg, rng, tracker, None, idx, rounds * S, M, dual)
        else:
            res = _inner(option, problem, plan, scheme, state, breg, rng, tracker, None, idx, None, rounds * M, dual)
        tracker.record(res.state, "round")
        return RunResult(res.state, tracker.checkpoints, seed, tracker.iteration, tracker.passes,
                         res.indices, extras={"rounds": 1, "delta": 0.0, "round_indices": [res.indices]})

    done = 0
    tables = None  # SAGA tables persist across rounds
    for r in range(rounds):
        anchor = RoundAnchor(state.w.copy(), state.alpha.copy(), delta, r)
        if breg is not None:
            for b in breg:
                b.set_anchor()
        stamps.append(anchor.round_index)
        idx = None if indices is None else indices[r]
        res = _inner(option, problem, plan, scheme, state, breg, rng, tracker, anchor, idx, S, M, dual, tables)
        tables = res.extras.get("tables")
        state = res.state
        logs.append(res.indices)
        tracker.record(state, "round")
        done = r + 1
        if tol is not None and duality_gap(problem, state) < tol:
            break
    return RunResult(state, tracker.checkpoints, seed, tracker.iteration, tracker.passes,
                     np.concatenate(logs), extras={"rounds": done, "delta": delta,
                                                   "round_indices": logs, "anchor_stamps": stamps})
