"""Loss and regularizer catalog.

Per-example losses ``phi(t; y)`` act on margins ``t = x^T w``.  A worker's
local function is the scaled sum ``f_i(u) = c * sum_j phi(u_j; y_j)`` with
``c = m / N``; its conjugate is ``f_i^*(a) = c * sum_j phi^*(a_j / c; y_j)``.
All functions here are vectorized over examples.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import DomainError, NoClosedFormError, UsageError

_DOMAIN_SLACK = 1e-12


class LossFamily:
    """Base class of the per-example smooth losses.

    ``nu`` is the smoothness parameter: ``phi`` is ``1/nu``-smooth and
    ``phi^*`` is ``nu``-strongly convex.
    """

    name = "loss"
    nu = 1.0

    def value(self, t, y):
        raise NotImplementedError

    def deriv(self, t, y):
        raise NotImplementedError

    def second_deriv(self, t, y):
        raise NotImplementedError

    def conj(self, beta, y):
        raise NotImplementedError

    def conj_grad(self, beta, y):
        raise NotImplementedError

    def in_domain(self, beta, y):
        return np.ones(np.shape(beta), dtype=bool)

    def check_domain(self, beta, y):
        ok = self.in_domain(beta, y)
        if not np.all(ok):
            bad = int(np.flatnonzero(~np.atleast_1d(ok))[0])
            raise DomainError(f"{self.name}: dual value outside conjugate domain (entry {bad})")

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(type(self))


class Quadratic(LossFamily):
    """phi(t) = (t - y)^2 / 2."""

    name = "quadratic"
    nu = 1.0

    def value(self, t, y):
        return 0.5 * (t - y) ** 2

    def deriv(self, t, y):
        return t - y

    def second_deriv(self, t, y):
        return np.ones_like(np.asarray(t, dtype=float))

    def conj(self, beta, y):
        return 0.5 * beta**2 + y * beta

    def conj_grad(self, beta, y):
        return beta + y


class SmoothedHinge(LossFamily):
    """Hinge loss with a quadratic piece on ``0 < y t < 1``."""

    name = "smoothed_hinge"
    nu = 1.0

    def value(self, t, y):
        z = y * t
        return np.where(z >= 1.0, 0.0, np.where(z <= 0.0, 0.5 - z, 0.5 * (1.0 - z) ** 2))

    def deriv(self, t, y):
        z = y * t
        return -y * np.clip(1.0 - z, 0.0, 1.0)

    def second_deriv(self, t, y):
        z = y * t
        return ((z > 0.0) & (z < 1.0)).astype(float)

    def in_domain(self, beta, y):
        z = y * beta
        return (z >= -1.0 - _DOMAIN_SLACK) & (z <= _DOMAIN_SLACK)

    def conj(self, beta, y):
        self.check_domain(beta, y)
        return y * beta + 0.5 * beta**2

    def conj_grad(self, beta, y):
        # one-sided limits at the interval ends, so the boundary maps back
        # onto the flat pieces of phi
        self.check_domain(beta, y)
        return y + beta


class Logistic(LossFamily):
    """phi(t) = log(1 + exp(-y t)) with labels in {-1, +1}."""

    name = "logistic"
    nu = 4.0

    def value(self, t, y):
        return np.logaddexp(0.0, -y * t)

    def deriv(self, t, y):
        return -y * expit(-y * t)

    def second_deriv(self, t, y):
        s = expit(y * t)
        return s * (1.0 - s)

    def in_domain(self, beta, y):
        z = y * beta
        return (z >= -1.0 - _DOMAIN_SLACK) & (z <= _DOMAIN_SLACK)

    def conj(self, beta, y):
        self.check_domain(beta, y)
        a = np.clip(-y * beta, 0.0, 1.0)  # a = -y beta in [0, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = np.where(a > 0, a * np.log(a), 0.0) + np.where(a < 1, (1 - a) * np.log1p(-a), 0.0)
        return ent

    def conj_grad(self, beta, y):
        a = -y * beta
        if np.any((a <= 0.0) | (a >= 1.0)):
            raise DomainError("logistic: conjugate gradient undefined on the boundary of its domain")
        return y * (np.log1p(-a) - np.log(a))


FAMILIES = {cls.name: cls for cls in (Quadratic, SmoothedHinge, Logistic)}


def get_loss(name):
    try:
        return FAMILIES[name]()
    except KeyError:
        raise ValueError(f"unknown loss {name!r}; choose from {sorted(FAMILIES)}") from None


# ---------------------------------------------------------------------------
# regularizers


class Regularizer:
    lam = 1.0

    def value(self, w):
        raise NotImplementedError

    def prox(self, v, tau):
        raise NotImplementedError

    def conj(self, z):
        raise NotImplementedError

    def conj_grad(self, z):
        raise NotImplementedError


class L2(Regularizer):
    """g(w) = (lam/2) ||w||^2."""

    def __init__(self, lam):
        if not lam > 0:
            raise ValueError("L2 regularizer needs lam > 0")
        self.lam = float(lam)

    def value(self, w):
        return 0.5 * self.lam * float(np.dot(w, w))

    def prox(self, v, tau):
        return v / (1.0 + tau * self.lam)

    def conj(self, z):
        return float(np.dot(z, z)) / (2.0 * self.lam)

    def conj_grad(self, z):
        return z / self.lam

    def __repr__(self):
        return f"L2(lam={self.lam!r})"


class ElasticNet(Regularizer):
    """g(w) = (lam/2) ||w||^2 + l1 ||w||_1."""

    def __init__(self, lam, l1):
        if not lam > 0:
            raise ValueError("ElasticNet needs lam > 0 (strong convexity)")
        if l1 < 0:
            raise ValueError("ElasticNet needs l1 >= 0")
        self.lam = float(lam)
        self.l1 = float(l1)

    def value(self, w):
        return 0.5 * self.lam * float(np.dot(w, w)) + self.l1 * float(np.abs(w).sum())

    def prox(self, v, tau):
        return _soft(v, tau * self.l1) / (1.0 + tau * self.lam)

    def conj(self, z):
        s = np.maximum(np.abs(z) - self.l1, 0.0)
        return float(np.dot(s, s)) / (2.0 * self.lam)

    def conj_grad(self, z):
        return _soft(z, self.l1) / self.lam

    def __repr__(self):
        return f"ElasticNet(lam={self.lam!r}, l1={self.l1!r})"


def _soft(v, thresh):
    return np.sign(v) * np.maximum(np.abs(v) - thresh, 0.0)


# ---------------------------------------------------------------------------
# gradients and proximal mappings


def loss_grad(loss, u, y, scale=1.0):
    """Gradient of ``f_i(u) = scale * sum_j phi(u_j; y_j)``."""
    return scale * loss.deriv(np.asarray(u, dtype=float), y)


def conj_prox(loss, z, y, sigma):
    """Componentwise ``prox_{sigma phi^*}(z)`` in closed form.

    Smoothed hinge clips ``y * beta`` onto the closed interval ``[-1, 0]``.
    The logistic conjugate has no closed-form prox; use the Bregman update.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if isinstance(loss, Logistic):
        raise NoClosedFormError("logistic conjugate prox has no closed form; use the Bregman dual step")
    beta = (np.asarray(z, dtype=float) - sigma * y) / (1.0 + sigma)
    if isinstance(loss, SmoothedHinge):
        beta = y * np.clip(y * beta, -1.0, 0.0)
    elif not isinstance(loss, Quadratic):
        raise NoClosedFormError(f"no closed-form conjugate prox for {loss!r}")
    return beta


def local_conj_prox(loss, z, y, sigma, scale):
    """``prox_{sigma f_i^*}(z)`` for the scaled local sum with factor ``scale``."""
    return scale * conj_prox(loss, np.asarray(z, dtype=float) / scale, y, sigma / scale)


def local_conj(loss, alpha, y, scale):
    return scale * float(np.sum(loss.conj(alpha / scale, y)))


def local_conj_grad(loss, alpha, y, scale):
    return loss.conj_grad(alpha / scale, y)


def reg_prox(reg, v, tau):
    if not tau > 0:
        raise ValueError("tau must be positive")
    return reg.prox(v, tau)


def perturbed_reg_prox(reg, v, tau, anchor, delta_lambda):
    """Prox of ``tau g + (tau delta_lambda / 2) ||. - anchor||^2`` evaluated at ``v``.

    Equivalent to ``prox`` of ``g`` with the shrunken step
    ``tau / (1 + tau delta_lambda)`` at the convex combination of ``v`` and
    the anchor.  ``delta_lambda == 0`` is exactly :func:`reg_prox`.
    """
    if delta_lambda == 0:
        return reg_prox(reg, v, tau)
    k = tau * delta_lambda
    return reg_prox(reg, (v + k * anchor) / (1.0 + k), tau / (1.0 + k))


def perturbed_conj_prox(loss, z, y, sigma, anchor, delta_gamma, scale=1.0):
    """Dual counterpart of :func:`perturbed_reg_prox` for ``f_i^*``."""
    if delta_gamma == 0:
        return local_conj_prox(loss, z, y, sigma, scale)
    loss.check_domain(np.asarray(anchor) / scale, y)
    k = sigma * delta_gamma
    return local_conj_prox(loss, (z + k * anchor) / (1.0 + k), y, sigma / (1.0 + k), scale)


# ---------------------------------------------------------------------------
# conjugate-free (Bregman) dual updates


class BregmanDualState:
    """Auxiliary point ``beta`` of one worker's conjugate-free dual update.

    The dual block is never stored; it is always ``alpha = grad f_i(beta)``.
    ``beta_tilde`` is the round anchor used by the accelerated variant.
    """

    def __init__(self, loss, y, scale=1.0, beta=None, beta_tilde=None):
        self.loss = loss
        self.y = np.asarray(y, dtype=float)
        self.scale = float(scale)
        self.beta = None if beta is None else np.array(beta, dtype=float)
        self.beta_tilde = None if beta_tilde is None else np.array(beta_tilde, dtype=float)

    @classmethod
    def from_alpha(cls, loss, y, scale, alpha):
        """Initialize with ``beta = grad f_i^*(alpha)``."""
        beta = local_conj_grad(loss, np.asarray(alpha, dtype=float), np.asarray(y, dtype=float), scale)
        return cls(loss, y, scale, beta=beta)

    @classmethod
    def from_margins(cls, loss, y, scale, u):
        """Initialize directly in the margin domain (alpha = grad f_i(u))."""
        return cls(loss, y, scale, beta=u)

    @property
    def initialized(self):
        return self.beta is not None

    def alpha(self):
        if self.beta is None:
            raise UsageError("Bregman dual state used before initialization")
        return loss_grad(self.loss, self.beta, self.y, self.scale)

    def set_anchor(self):
        """Freeze the current point as the round anchor (``grad f^*`` of the current alpha)."""
        if self.beta is None:
            raise UsageError("Bregman dual state used before initialization")
        self.beta_tilde = self.beta.copy()

    def copy(self):
        return BregmanDualState(self.loss, self.y, self.scale, self.beta, self.beta_tilde)


def bregman_dual_step(state, u_new, sigma):
    """One conjugate-free dual step: ``beta <- (beta + sigma u) / (1 + sigma)``.

    Returns ``(alpha_new, state)``; ``state`` is updated in place.
    """
    if not state.initialized:
        raise UsageError("Bregman dual state used before initialization")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    state.beta = (state.beta + sigma * u_new) / (1.0 + sigma)
    return state.alpha(), state


def bregman_dual_step_accl(state, u_new, sigma, delta_gamma):
    """Accelerated conjugate-free step pulling ``beta`` towards ``beta_tilde``."""
    if delta_gamma == 0:
        return bregman_dual_step(state, u_new, sigma)
    if not state.initialized or state.beta_tilde is None:
        raise UsageError("accelerated Bregman step needs beta and its round anchor beta_tilde")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    k = sigma * delta_gamma
    state.beta = (state.beta + sigma * u_new + k * state.beta_tilde) / (1.0 + sigma + k)
    return state.alpha(), state
