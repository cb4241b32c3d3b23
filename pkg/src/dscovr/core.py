"""Sequential reference engines: generic framework, DSCOVR-SVRG, DSCOVR-SAGA.

The per-block kernels (``*_block_*``) operate on block-local arrays only, so
the asynchronous simulator can call exactly the same arithmetic from its
worker actors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, DomainError, ShapeError
from .losses import (
    BregmanDualState,
    bregman_dual_step,
    bregman_dual_step_accl,
    local_conj_prox,
    perturbed_conj_prox,
    perturbed_reg_prox,
    reg_prox,
)
from .problem import SaddleState, duality_gap, omega, primal_value

DIVERGENCE_FACTOR = 1e6


# ---------------------------------------------------------------------------
# results


@dataclass
class Checkpoint:
    iteration: int
    passes: float
    omega: float = float("nan")
    primal: float = float("nan")
    primal_gap: float = float("nan")
    duality_gap: float = float("nan")
    kind: str = "periodic"
    time: float = float("nan")
    info: dict = field(default_factory=dict)


@dataclass
class RunResult:
    state: SaddleState
    checkpoints: list
    seed: int | None
    iterations: int
    passes: float
    indices: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    extras: dict = field(default_factory=dict)

    def stage_omegas(self):
        return np.array([c.omega for c in self.checkpoints if c.kind in ("start", "stage")])

    def stage_gaps(self):
        return np.array([c.duality_gap for c in self.checkpoints if c.kind in ("start", "stage")])

    def round_omegas(self):
        return np.array([c.omega for c in self.checkpoints if c.kind in ("start", "round")])


@dataclass
class RoundAnchor:
    """Frozen anchors of one accelerated round."""

    w_tilde: np.ndarray
    alpha_tilde: np.ndarray
    delta: float
    round_index: int = 0


class Tracker:
    """Records checkpoints, calls hooks and guards against divergence."""

    def __init__(self, problem, reference=None, hooks=(), track=True, every=None,
                 divergence_factor=DIVERGENCE_FACTOR, iteration0=0, passes0=0.0, annotate=None):
        self.problem = problem
        self.reference = reference
        self.hooks = tuple(hooks)
        self.track = track
        self.every = every or problem.m * problem.n
        self.factor = divergence_factor
        self.checkpoints = []
        self.iteration = iteration0
        self.passes = passes0
        self.omega0 = None
        self.p_ref = None if reference is None else primal_value(problem, reference.w)
        self.time = float("nan")
        self.annotate = annotate

    def _distance(self, state):
        if self.reference is None:
            return omega(self.problem, state, SaddleState(np.zeros_like(state.w), np.zeros_like(state.alpha)))
        return omega(self.problem, state, self.reference)

    def record(self, state, kind="periodic"):
        dist = self._distance(state)
        if self.omega0 is None:
            floor = 1e-300 if self.reference is not None else 1.0
            self.omega0 = max(dist, floor)
        elif not np.isfinite(dist) or dist > self.factor * self.omega0:
            raise DivergenceError(f"diverged at iteration {self.iteration} (omega={dist:.3g})", self.iteration)
        if self.track:
            cp = Checkpoint(self.iteration, self.passes, kind=kind, time=self.time)
            if self.annotate is not None:
                cp.info = dict(self.annotate())
            if self.reference is not None:
                cp.omega = dist
            cp.primal = primal_value(self.problem, state.w)
            if self.p_ref is not None:
                cp.primal_gap = cp.primal - self.p_ref
            cp.duality_gap = duality_gap(self.problem, state)
            self.checkpoints.append(cp)
        for hook in self.hooks:
            hook(self.iteration, self.passes, state)

    def tick(self, state, blocks=1):
        self.iteration += 1
        self.passes = round(self.passes + blocks / (self.problem.m * self.problem.n), 12)
        if self.iteration % self.every == 0:
            self.record(state)


# ---------------------------------------------------------------------------
# block kernels


def dual_block_update(problem, plan, j, alpha_j, u_j, breg=None, anchor_j=None, delta=0.0):
    """New dual block: prox of ``sigma_j f_j^*`` (or its conjugate-free form)."""
    sigma = plan.sigma[j]
    if breg is not None:
        # Bregman step normalized by gamma_j so that quadratic losses
        # reproduce the Euclidean prox exactly
        sb = problem.gamma[j] * sigma
        if delta:
            alpha, _ = bregman_dual_step_accl(breg, u_j, sb, delta)
        else:
            alpha, _ = bregman_dual_step(breg, u_j, sb)
        return alpha
    z = alpha_j + sigma * u_j
    y = problem.y_block(j)
    if delta:
        return perturbed_conj_prox(problem.loss, z, y, sigma, anchor_j, delta * problem.gamma[j], problem.scale)
    return local_conj_prox(problem.loss, z, y, sigma, problem.scale)


def primal_block_update(problem, plan, l, w_l, v_l, anchor_l=None, delta=0.0):
    tau = plan.tau[l]
    v = w_l - tau * v_l
    if delta:
        return perturbed_reg_prox(problem.reg, v, tau, anchor_l, delta * problem.lam)
    return reg_prox(problem.reg, v, tau)


def svrg_block_gradients(problem, scheme, j, l, w_l, alpha_j, w_bar_l, alpha_bar_j, u_bar_j, v_bar_l):
    data = problem.data
    u = u_bar_j + (data.blocks[j][l] @ (w_l - w_bar_l)) / scheme.q[l]
    v = v_bar_l + (data.blocks_T[j][l] @ (alpha_j - alpha_bar_j)) / (scheme.p[j] * problem.m)
    return u, v


def saga_block_gradients(problem, scheme, j, l, w_l, alpha_j, u_bar_j, v_bar_l, U_jl, V_jl):
    """SAGA gradients plus the fresh table entries ``X_jl w_l`` and ``X_jl^T alpha_j / m``."""
    data = problem.data
    new_U = data.blocks[j][l] @ w_l
    new_V = (data.blocks_T[j][l] @ alpha_j) / problem.m
    u = u_bar_j + (new_U - U_jl) / scheme.q[l]
    v = v_bar_l + (new_V - V_jl) / scheme.p[j]
    return u, v, new_U, new_V


# ---------------------------------------------------------------------------
# gradient estimators on full states


def _blocks(problem, j, l):
    return problem.data.row_part.slice(j), problem.data.col_part.slice(l)


def exact_partial_gradients(problem, state, j, l):
    """``u_j = sum_k X_jk w_k`` and ``v_l = (1/m) sum_i X_il^T alpha_i``."""
    data = problem.data
    rp, cp = data.row_part, data.col_part
    u = sum(data.blocks[j][k] @ state.w[cp.slice(k)] for k in range(problem.n))
    v = sum(data.blocks_T[i][l] @ state.alpha[rp.slice(i)] for i in range(problem.m)) / problem.m
    return np.asarray(u, dtype=float), np.asarray(v, dtype=float)


def plain_stochastic_gradients(problem, state, j, l, scheme):
    rs, cs = _blocks(problem, j, l)
    data = problem.data
    u = (data.blocks[j][l] @ state.w[cs]) / scheme.q[l]
    v = (data.blocks_T[j][l] @ state.alpha[rs]) / (scheme.p[j] * problem.m)
    return u, v


@dataclass
class SvrgStageState:
    w_bar: np.ndarray
    alpha_bar: np.ndarray
    u_bar: np.ndarray
    v_bar: np.ndarray


def svrg_snapshot(problem, state):
    """Batch products at a stage start: ``u_bar = X w_bar``, ``v_bar = X^T alpha_bar / m``."""
    X = problem.data.X
    return SvrgStageState(state.w.copy(), state.alpha.copy(), X @ state.w, (X.T @ state.alpha) / problem.m)


def svrg_vr_gradients(problem, stage, state, j, l, scheme):
    rs, cs = _blocks(problem, j, l)
    return svrg_block_gradients(
        problem, scheme, j, l, state.w[cs], state.alpha[rs],
        stage.w_bar[cs], stage.alpha_bar[rs], stage.u_bar[rs], stage.v_bar[cs],
    )


class SagaTables:
    """Historical block products ``U_ik = X_ik w_k`` and ``V_ik = X_ik^T alpha_i / m``.

    ``u_bar`` and ``v_bar`` are the running row/column sums of the tables.
    """

    def __init__(self, problem, state):
        data = problem.data
        rp, cp = data.row_part, data.col_part
        m, n = problem.m, problem.n
        self.U = [[data.blocks[i][k] @ state.w[cp.slice(k)] for k in range(n)] for i in range(m)]
        self.V = [[(data.blocks_T[i][k] @ state.alpha[rp.slice(i)]) / m for k in range(n)] for i in range(m)]
        self.u_bar = np.concatenate([np.sum(self.U[i], axis=0) for i in range(m)])
        self.v_bar = np.concatenate([np.sum([self.V[i][k] for i in range(m)], axis=0) for k in range(n)])
        self.row_part, self.col_part = rp, cp

    def u_bar_block(self, i):
        return self.u_bar[self.row_part.slice(i)]

    def v_bar_block(self, k):
        return self.v_bar[self.col_part.slice(k)]

    def recomputed_sums(self):
        m, n = len(self.U), len(self.U[0])
        u = np.concatenate([np.sum(self.U[i], axis=0) for i in range(m)])
        v = np.concatenate([np.sum([self.V[i][k] for i in range(m)], axis=0) for k in range(n)])
        return u, v


def saga_vr_gradients(problem, tables, state, j, l, scheme):
    rs, cs = _blocks(problem, j, l)
    u, v, _, _ = saga_block_gradients(
        problem, scheme, j, l, state.w[cs], state.alpha[rs],
        tables.u_bar[rs], tables.v_bar[cs], tables.U[j][l], tables.V[j][l],
    )
    return u, v


# ---------------------------------------------------------------------------
# framework step and engines


def framework_step(problem, state, j, l, u_j, v_l, plan, breg=None, anchor=None):
    """One update of dual block ``j`` and primal block ``l``; returns a new state."""
    rs, cs = _blocks(problem, j, l)
    if u_j.shape != (rs.stop - rs.start,) or v_l.shape != (cs.stop - cs.start,):
        raise ShapeError("gradient shapes do not match blocks (j, l)")
    new = state.copy()
    _apply(problem, plan, new, j, l, u_j, v_l, breg, anchor)
    return new


def _apply(problem, plan, state, j, l, u_j, v_l, breg=None, anchor=None):
    rs, cs = _blocks(problem, j, l)
    delta = anchor.delta if anchor is not None else 0.0
    a_anchor = anchor.alpha_tilde[rs] if delta else None
    w_anchor = anchor.w_tilde[cs] if delta else None
    new_a = dual_block_update(problem, plan, j, state.alpha[rs], u_j, breg, a_anchor, delta)
    new_w = primal_block_update(problem, plan, l, state.w[cs], v_l, w_anchor, delta)
    if not (np.all(np.isfinite(new_a)) and np.all(np.isfinite(new_w))):
        raise DivergenceError("non-finite update", None)
    state.alpha[rs] = new_a
    state.w[cs] = new_w


def init_bregman(problem, state, margins=False):
    """Per-worker conjugate-free dual states.

    With ``margins=True`` the auxiliary point starts at ``X_i w`` and the
    dual block is overwritten with ``grad f_i(X_i w)``; this is the only
    valid start for losses whose conjugate gradient blows up at ``alpha=0``.
    """
    rp = problem.data.row_part
    states = []
    Xw = problem.data.X @ state.w if margins else None
    for i in range(problem.m):
        y = problem.y_block(i)
        if margins:
            b = BregmanDualState.from_margins(problem.loss, y, problem.scale, Xw[rp.slice(i)])
        else:
            b = BregmanDualState.from_alpha(problem.loss, y, problem.scale, state.alpha[rp.slice(i)])
        state.alpha[rp.slice(i)] = b.alpha()
        states.append(b)
    return states


def _initial_state(problem, w0, a0):
    w = np.zeros(problem.d) if w0 is None else np.array(w0, dtype=float)
    a = np.zeros(problem.N) if a0 is None else np.array(a0, dtype=float)
    state = SaddleState(w, a)
    problem.check_state(state)
    return state


def _index_source(rng, scheme, indices):
    """Yield ``(j, l)`` pairs: replayed from ``indices`` or sampled i.i.d."""
    if indices is not None:
        for j, l in np.asarray(indices, dtype=int):
            yield int(j), int(l)
        return
    m, n = scheme.m, scheme.n
    while True:
        js = rng.choice(m, size=1024, p=scheme.p)
        ls = rng.choice(n, size=1024, p=scheme.q)
        for j, l in zip(js, ls):
            yield int(j), int(l)


def _setup(problem, w0, a0, dual, breg_states, seed, rng):
    state = _initial_state(problem, w0, a0)
    if dual not in ("prox", "bregman"):
        raise ValueError("dual must be 'prox' or 'bregman'")
    if dual == "bregman" and breg_states is None:
        try:
            breg_states = init_bregman(problem, state)
        except DomainError:
            # alpha0 has no finite conjugate gradient (logistic at alpha = 0)
            breg_states = init_bregman(problem, state, margins=True)
    if rng is None:
        rng = np.random.default_rng(seed)
    return state, breg_states, rng


def run_framework(problem, plan, scheme, w0=None, a0=None, iterations=1000, seed=0, gradients="plain",
                  reference=None, hooks=(), dual="prox", checkpoint_every=None, track=True):
    """Generic doubly stochastic loop with plain or exact partial gradients."""
    state, breg, rng = _setup(problem, w0, a0, dual, None, seed, None)
    tracker = Tracker(problem, reference, hooks, track, checkpoint_every)
    tracker.record(state, "start")
    src = _index_source(rng, scheme, None)
    log = np.empty((iterations, 2), dtype=int)
    for t in range(iterations):
        j, l = next(src)
        log[t] = j, l
        if gradients == "exact":
            u, v = exact_partial_gradients(problem, state, j, l)
        else:
            u, v = plain_stochastic_gradients(problem, state, j, l, scheme)
        _apply(problem, plan, state, j, l, u, v, breg[j] if breg else None)
        tracker.tick(state, problem.m * problem.n if gradients == "exact" else 1)
    tracker.record(state, "final")
    return RunResult(state, tracker.checkpoints, seed, tracker.iteration, tracker.passes, log)


def run_dscovr_svrg(problem, plan, scheme, w0=None, a0=None, S=10, M=None, seed=0, hooks=(), *,
                    reference=None, dual="prox", indices=None, anchor=None, breg_states=None, rng=None,
                    checkpoint_every=None, track=True, tracker=None, divergence_factor=DIVERGENCE_FACTOR):
    """DSCOVR-SVRG: S stages, each a batch snapshot followed by M block updates.

    ``indices`` replays a recorded ``(j, l)`` sequence instead of sampling.
    ``anchor`` switches to the perturbed proximal mappings of one
    accelerated round.
    """
    M = plan.M if M is None else M
    if M is None or M < 1:
        raise ValueError("M must be >= 1")
    state, breg, rng = _setup(problem, w0, a0, dual, breg_states, seed, rng)
    if tracker is None:
        tracker = Tracker(problem, reference, hooks, track, checkpoint_every, divergence_factor)
        tracker.record(state, "start")
    src = _index_source(rng, scheme, indices)
    log = np.empty((S * M, 2), dtype=int)
    t = 0
    for _ in range(S):
        stage = svrg_snapshot(problem, state)
        tracker.passes += 1.0
        for _ in range(M):
            j, l = next(src)
            log[t] = j, l
            t += 1
            u, v = svrg_vr_gradients(problem, stage, state, j, l, scheme)
            _apply(problem, plan, state, j, l, u, v, breg[j] if breg else None, anchor)
            tracker.tick(state)
        tracker.record(state, "stage")
    return RunResult(state, tracker.checkpoints, seed, tracker.iteration, tracker.passes, log,
                     extras={"bregman": breg})


def run_dscovr_saga(problem, plan, scheme, w0=None, a0=None, M=None, seed=0, hooks=(), *,
                    reference=None, dual="prox", indices=None, anchor=None, breg_states=None, rng=None,
                    checkpoint_every=None, track=True, tracker=None, check_tables_every=0,
                    divergence_factor=DIVERGENCE_FACTOR, tables=None):
    """DSCOVR-SAGA: single loop over a table of historical block products.

    ``tables`` continues from existing :class:`SagaTables` (updated in place)
    instead of building fresh ones, which costs one pass.
    """
    M = plan.M if M is None else M
    if M is None or M < 1:
        raise ValueError("M must be >= 1")
    state, breg, rng = _setup(problem, w0, a0, dual, breg_states, seed, rng)
    if tracker is None:
        tracker = Tracker(problem, reference, hooks, track, checkpoint_every, divergence_factor)
        tracker.record(state, "start")
    if tables is None:
        tables = SagaTables(problem, state)
        tracker.passes += 1.0
    src = _index_source(rng, scheme, indices)
    log = np.empty((M, 2), dtype=int)
    rp, cp = problem.data.row_part, problem.data.col_part
    for t in range(M):
        j, l = next(src)
        log[t] = j, l
        rs, cs = rp.slice(j), cp.slice(l)
        u, v, new_U, new_V = saga_block_gradients(
            problem, scheme, j, l, state.w[cs], state.alpha[rs],
            tables.u_bar[rs], tables.v_bar[cs], tables.U[j][l], tables.V[j][l],
        )
        tables.u_bar[rs] += new_U - tables.U[j][l]
        tables.v_bar[cs] += new_V - tables.V[j][l]
        tables.U[j][l] = new_U
        tables.V[j][l] = new_V
        _apply(problem, plan, state, j, l, u, v, breg[j] if breg else None, anchor)
        tracker.tick(state)
        if check_tables_every and (t + 1) % check_tables_every == 0:
            u_sum, v_sum = tables.recomputed_sums()
            if not (np.allclose(u_sum, tables.u_bar, rtol=1e-9, atol=1e-12)
                    and np.allclose(v_sum, tables.v_bar, rtol=1e-9, atol=1e-12)):
                raise AssertionError(f"table-sum identity broken at iteration {t + 1}")
    tracker.record(state, "stage")
    return RunResult(state, tracker.checkpoints, seed, tracker.iteration, tracker.passes, log,
                     extras={"bregman": breg, "tables": tables})
