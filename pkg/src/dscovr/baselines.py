"""Batch proximal-gradient baselines and high-accuracy reference oracles."""

from __future__ import annotations

import math

import numpy as np

from .core import Checkpoint, RunResult
from .errors import OracleError, StallError
from .losses import L2, Quadratic
from .problem import SaddleState, duality_gap, omega, primal_value

MAX_DOUBLINGS = 60


class _Smooth:
    """Smooth part ``F(w) = c sum_j phi_j(x_j^T w)``.

    ``c = 1/N`` for the full problem; on a worker's row subset ``c = m/N``,
    which gives the local function ``f_i(X_i w)``.
    """

    def __init__(self, problem, rows=None):
        X = problem.data.X if rows is None else problem.data.X[rows]
        self.X = X
        self.XT = X.T.tocsr()
        self.y = problem.labels if rows is None else problem.labels[rows]
        self.loss = problem.loss
        self.N = X.shape[0]
        self.c = 1.0 / problem.N if rows is None else problem.scale

    def value(self, w):
        return self.c * float(np.sum(self.loss.value(self.X @ w, self.y)))

    def value_grad(self, w):
        t = self.X @ w
        return self.c * float(np.sum(self.loss.value(t, self.y))), self.c * (self.XT @ self.loss.deriv(t, self.y))

    def hessian(self, w):
        h = self.c * self.loss.second_deriv(self.X @ w, self.y)
        Xd = self.X.toarray()
        return Xd.T @ (h[:, None] * Xd)


def _lipschitz_guess(smooth):
    # one power step on X^T X gives a quick, reasonable scale
    v = np.ones(smooth.X.shape[1]) / math.sqrt(max(smooth.X.shape[1], 1))
    return max(smooth.c * float(np.linalg.norm(smooth.XT @ (smooth.X @ v))) / 4.0, 1e-8)


def _prox_grad(smooth, reg, y, gy, L):
    """Backtracking prox-gradient step from ``y``; doubles ``L`` until sufficient decrease.

    The test ``<grad F(w) - grad F(y), w - y> <= (L/2)||w - y||^2`` implies
    the usual descent inequality for convex ``F`` and, unlike comparing
    function values, stays reliable down to roundoff level.
    Returns ``(w, F(w), grad F(w), L, ||gradient mapping||)``.
    """
    for _ in range(MAX_DOUBLINGS):
        w = reg.prox(y - gy / L, 1.0 / L)
        d = w - y
        fw, gw = smooth.value_grad(w)
        dd = float(d @ d)
        if float((gw - gy) @ d) <= 0.5 * L * dd:
            return w, fw, gw, L, math.sqrt(dd) * L
        L *= 2.0
    raise StallError("line search failed after 60 step-size halvings")


def _objective(smooth, reg, w):
    return smooth.value(w) + reg.value(w)


def run_pgd(problem, w0=None, iters=500, tol=0.0, reference=None, rows=None, hooks=(), track=True):
    """Proximal gradient descent with adaptive line search.

    The Lipschitz estimate starts from the previous one, doubles on a failed
    sufficient-decrease test and halves after every accepted step.  Each
    iteration counts as two passes over the data.  ``track=False`` skips
    the per-iteration checkpoints.
    """
    smooth = _Smooth(problem, rows)
    reg = problem.reg
    w = np.zeros(problem.d) if w0 is None else np.array(w0, dtype=float)
    L = _lipschitz_guess(smooth)
    cps = []
    p_ref = None if reference is None else primal_value(problem, reference.w)
    it = 0

    def log(kind):
        if track:
            cps.append(_checkpoint(problem, smooth, reg, w, it, 2.0 * it, reference, p_ref, kind, rows))
        for h in hooks:
            h(it, 2.0 * it, w)

    log("start")
    _, g = smooth.value_grad(w)
    for it in range(1, iters + 1):
        w, _, g, L, gmap = _prox_grad(smooth, reg, w, g, L)
        L = max(L / 2.0, 1e-12)
        log("periodic")
        if gmap <= tol:
            break
    return RunResult(_state(problem, w), cps, None, it, 2.0 * it, extras={"L": L})


def run_apg(problem, w0=None, iters=500, tol=0.0, reference=None, rows=None, hooks=(), track=True):
    """Accelerated proximal gradient exploiting the strong convexity of g.

    Momentum ``(sqrt(k) - 1)/(sqrt(k) + 1)`` with ``k = (L + lam)/lam`` and
    the same adaptive line search as :func:`run_pgd`.  When the objective
    would increase, the momentum is reset and a plain prox-gradient step is
    taken instead, so the recorded objective never goes up.
    """
    smooth = _Smooth(problem, rows)
    reg = problem.reg
    lam = problem.lam
    w = np.zeros(problem.d) if w0 is None else np.array(w0, dtype=float)
    w_prev = w.copy()
    L = _lipschitz_guess(smooth)
    cps = []
    p_ref = None if reference is None else primal_value(problem, reference.w)
    f, g = smooth.value_grad(w)
    F = f + reg.value(w)
    restarts = 0
    it = 0

    def log(kind):
        if track:
            cps.append(_checkpoint(problem, smooth, reg, w, it, 2.0 * it, reference, p_ref, kind, rows))
        for h in hooks:
            h(it, 2.0 * it, w)

    log("start")
    for it in range(1, iters + 1):
        k = math.sqrt((L + lam) / lam)
        beta = (k - 1.0) / (k + 1.0)
        y = w + beta * (w - w_prev)
        _, gy = smooth.value_grad(y)
        w_new, f_new, g_new, L, gmap = _prox_grad(smooth, reg, y, gy, L)
        F_new = f_new + reg.value(w_new)
        if F_new > F:
            restarts += 1
            w_new, f_new, g_new, L, gmap = _prox_grad(smooth, reg, w, g, L)
            F_new = f_new + reg.value(w_new)
            w_prev = w_new.copy()
        else:
            w_prev = w
        w, g, F = w_new, g_new, F_new
        L = max(L / 2.0, 1e-12)
        log("periodic")
        if gmap <= tol:
            break
    return RunResult(_state(problem, w), cps, None, it, 2.0 * it, extras={"L": L, "restarts": restarts})


def _state(problem, w):
    return SaddleState(w, problem.dual_from_primal(w))


def _checkpoint(problem, smooth, reg, w, it, passes, reference, p_ref, kind, rows):
    cp = Checkpoint(it, passes, kind=kind)
    if rows is not None:
        cp.primal = _objective(smooth, reg, w)
        return cp
    state = _state(problem, w)
    cp.primal = primal_value(problem, w)
    if reference is not None:
        cp.omega = omega(problem, state, reference)
        cp.primal_gap = cp.primal - p_ref
    cp.duality_gap = duality_gap(problem, state)
    return cp


def _residual(smooth, reg, w):
    _, g = smooth.value_grad(w)
    return float(np.linalg.norm(w - reg.prox(w - g, 1.0)))


def optimality_residual(problem, w):
    """Norm of the prox-gradient mapping at ``w`` with unit step."""
    return _residual(_Smooth(problem), problem.reg, w)


def saddle_oracle(problem, tol=1e-10):
    """Reference saddle point ``(w*, alpha*)``.

    Quadratic loss with L2 regularization is solved from the normal
    equations; everything else runs APG to high accuracy, polished by
    (semismooth) Newton steps when ``g`` is L2.  ``alpha* = grad f_i(X_i w*)``.
    """
    X = problem.data.X
    N = problem.N
    if isinstance(problem.loss, Quadratic) and isinstance(problem.reg, L2):
        Xd = X.toarray()
        A = Xd.T @ Xd / N + problem.lam * np.eye(problem.d)
        w = np.linalg.solve(A, Xd.T @ problem.labels / N)
    else:
        res = run_apg(problem, iters=20000, tol=tol * 1e-2, track=False)
        w = res.state.w
        if isinstance(problem.reg, L2):
            w = _newton_polish(problem, w)
    resid = optimality_residual(problem, w)
    if resid > tol:
        raise OracleError(f"oracle residual {resid:.3g} above {tol:.1g}")
    return _state(problem, w)


def _newton_polish(problem, w, steps=20):
    smooth = _Smooth(problem)
    lam = problem.lam
    best = optimality_residual(problem, w)
    for _ in range(steps):
        _, g = smooth.value_grad(w)
        H = smooth.hessian(w) + lam * np.eye(problem.d)
        cand = w - np.linalg.solve(H, g + lam * w)
        r = optimality_residual(problem, cand)
        if not r < best:
            break
        w, best = cand, r
        if best < 1e-15:
            break
    return w


def local_solutions(problem, tol=1e-8, iters=5000):
    """Per-worker minimizers of ``f_i(X_i w) + g(w)`` (via APG).

    Raises :class:`StallError` if a local solve ends above ``tol``.
    """
    rp = problem.data.row_part
    sols = []
    for i in range(problem.m):
        rows = np.arange(*rp.ranges()[i])
        res = run_apg(problem, iters=iters, tol=tol, rows=rows, track=False)
        r = _residual(_Smooth(problem, rows), problem.reg, res.state.w)
        if r > tol:
            raise StallError(f"local solve on worker {i} stopped at residual {r:.3g}")
        sols.append(res.state.w)
    return sols


__all__ = ["run_pgd", "run_apg", "saddle_oracle", "optimality_residual", "local_solutions"]
