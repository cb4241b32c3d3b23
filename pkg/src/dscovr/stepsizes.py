"""Sampling distributions, condition numbers and step-size plans."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError, InfeasiblePlanError

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class SamplingScheme:
    p: np.ndarray
    q: np.ndarray
    kind: str = "uniform"

    def __post_init__(self):
        for name in ("p", "q"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.ndim != 1 or v.size == 0 or np.any(v <= 0) or abs(v.sum() - 1.0) > 1e-12:
                raise ValueError(f"{name} must be a strictly positive probability vector")
            object.__setattr__(self, name, v)

    @classmethod
    def uniform(cls, m, n):
        return cls(np.full(m, 1.0 / m), np.full(n, 1.0 / n), "uniform")

    @classmethod
    def frobenius(cls, data):
        """Probabilities proportional to squared Frobenius norms of the stripes.

        Zero stripes get a ``1e-12`` floor before renormalizing, so every
        probability stays strictly positive.
        """
        return cls(_floored(data.row_frobenius_sq), _floored(data.col_frobenius_sq), "frobenius")

    @property
    def m(self):
        return self.p.size

    @property
    def n(self):
        return self.q.size


def _floored(weights):
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        return np.full(w.size, 1.0 / w.size)
    w = np.maximum(w / total, PROB_FLOOR)
    return w / w.sum()


def make_scheme(kind, problem):
    if kind == "uniform":
        return SamplingScheme.uniform(problem.m, problem.n)
    if kind in ("frobenius", "frobenius-proportional"):
        return SamplingScheme.frobenius(problem.data)
    raise ValueError(f"unknown sampling scheme {kind!r}")


@dataclass(frozen=True)
class ConditionNumbers:
    kappa_bat: float
    kappa_rand: float
    kappa_prime: float
    kappa_dprime: float


def _gamma_scalar(problem):
    return float(np.min(problem.gamma))


def condition_numbers(problem, scheme=None):
    """Batch and randomized condition numbers of the partitioned problem.

    ``scheme`` is accepted for symmetry with the plan builders; the four
    numbers depend only on the data and the strong-convexity constants.
    """
    data = problem.data
    lam, gam, m, n = problem.lam, _gamma_scalar(problem), problem.m, problem.n
    spec_sq = data.spectral_norm() ** 2
    fro_sq = data.frobenius_sq()
    max_block_sq = float(np.max(data.spectral)) ** 2
    max_f_sq = float(max(data.row_frobenius_sq.max(), data.col_frobenius_sq.max()))
    kn = ConditionNumbers(
        kappa_bat=spec_sq / (m * lam * gam),
        kappa_rand=n * max_block_sq / (lam * gam),
        kappa_prime=max_f_sq / (lam * gam),
        kappa_dprime=fro_sq / (m * lam * gam),
    )
    slack = 1e-9 * max(kn.kappa_bat, 1e-300)
    if kn.kappa_bat > min(kn.kappa_rand, kn.kappa_prime, kn.kappa_dprime) + slack:
        raise ArithmeticError(f"condition-number ordering violated: {kn}")
    return kn


@dataclass
class StepSizePlan:
    sigma: np.ndarray
    tau: np.ndarray
    Gamma: float | None = None
    Lambda: float | None = None
    delta: float | None = None
    source: str = ""
    M: int | None = None
    S: int | None = None
    single_round: bool = False
    extras: dict = field(default_factory=dict)

    def scaled(self, factor):
        """Same plan with every step multiplied by ``factor``."""
        return StepSizePlan(
            self.sigma * factor, self.tau * factor, self.Gamma, self.Lambda, self.delta,
            f"{self.source}*{factor:g}", self.M, self.S, self.single_round, dict(self.extras),
        )


def _svrg_terms(problem, scheme, mode, shrink=1.0):
    """The two per-block expressions whose maximum defines Gamma.

    ``shrink`` multiplies ``lam * gamma_i`` (``(1+delta)^2`` for the
    perturbed problem).
    """
    data = problem.data
    p = scheme.p[:, None]
    q = scheme.q[None, :]
    lg = problem.lam * problem.gamma[:, None] * shrink
    m, n = problem.m, problem.n
    if mode == "spectral":
        sq = data.spectral**2
        t1 = (1.0 / p) * (1.0 + 9.0 * sq / (2.0 * q * lg))
        t2 = (1.0 / q) * (1.0 + 9.0 * n * sq / (2.0 * m * p * lg))
    elif mode == "frobenius":
        col = data.col_frobenius_sq[None, :]
        row = data.row_frobenius_sq[:, None]
        t1 = (1.0 / p) * (1.0 + 9.0 * col / (2.0 * q * m * lg))
        t2 = (1.0 / q) * (1.0 + 9.0 * row / (2.0 * p * m * lg))
    else:
        raise ValueError(f"unknown Gamma mode {mode!r}")
    return t1, t2


def gamma_svrg(problem, scheme, mode="spectral"):
    """Smallest Gamma meeting the SVRG condition (spectral or Frobenius form)."""
    t1, t2 = _svrg_terms(problem, scheme, mode)
    return float(max(t1.max(), t2.max()))


def gamma_saga(problem, scheme, mode="spectral"):
    pq = 1.0 / (scheme.p[:, None] * scheme.q[None, :])
    return max(gamma_svrg(problem, scheme, mode), float(pq.max()))


def _check_feasible(Gamma, scheme):
    if np.any(scheme.p * Gamma <= 1.0) or np.any(scheme.q * Gamma <= 1.0):
        raise InfeasiblePlanError(f"Gamma={Gamma!r} needs p_i*Gamma > 1 and q_k*Gamma > 1")


def stepsizes_theorem1(Gamma, scheme, problem, source="theorem1"):
    """sigma_i = 1/(2 gamma_i (p_i Gamma - 1)), tau_k = 1/(2 lam (q_k Gamma - 1))."""
    _check_feasible(Gamma, scheme)
    sigma = 1.0 / (2.0 * problem.gamma * (scheme.p * Gamma - 1.0))
    tau = 1.0 / (2.0 * problem.lam * (scheme.q * Gamma - 1.0))
    M = math.ceil(math.log(3.0) * Gamma)
    return StepSizePlan(sigma, tau, Gamma=Gamma, source=source, M=M)


def plan_theorem1(problem, scheme, mode="spectral", gamma_scale=1.0):
    return stepsizes_theorem1(gamma_scale * gamma_svrg(problem, scheme, mode), scheme, problem)


def stepsizes_theorem2(problem, scheme, gamma_scale=1.0):
    """Plan for duality-gap convergence (Frobenius block bound Lambda)."""
    data = problem.data
    Lam = float(np.max(data.frobenius**2))
    p = scheme.p[:, None]
    q = scheme.q[None, :]
    lg = problem.lam * problem.gamma[:, None]
    m, n = problem.m, problem.n
    t1 = (1.0 / p) * (1.0 + 18.0 * Lam / (q * lg))
    t2 = (1.0 / q) * (1.0 + 18.0 * n * Lam / (p * m * lg))
    Gamma = gamma_scale * float(max(t1.max(), t2.max()))
    _check_feasible(Gamma, scheme)
    sigma = 1.0 / (problem.gamma * (scheme.p * Gamma - 1.0))
    tau = 1.0 / (problem.lam * (scheme.q * Gamma - 1.0))
    return StepSizePlan(sigma, tau, Gamma=Gamma, Lambda=Lam, source="theorem2",
                        M=math.ceil(math.log(3.0) * Gamma))


def stepsizes_saga(problem, scheme, mode="spectral", gamma_scale=1.0):
    Gamma = gamma_scale * gamma_saga(problem, scheme, mode)
    plan = stepsizes_theorem1(Gamma, scheme, problem, source="saga")
    plan.M = math.ceil(3.0 * Gamma * math.log(40.0 / 3.0))
    return plan


def accel_delta(kappa_rand, m):
    """Perturbation weight balancing outer rounds against inner work."""
    return max(0.0, math.sqrt(kappa_rand / (1.0 + m)) - 1.0)


def accel_stages(delta):
    return math.ceil(2.0 * math.log(2.0 * (1.0 + delta)) / math.log(1.5))


def gamma_delta_uniform(kappa_rand, delta, m, n):
    """Closed-form Gamma_delta for uniform sampling with m <= n."""
    return n * (1.0 + 9.0 * kappa_rand / (2.0 * (1.0 + delta) ** 2)) + m * n


def gamma_delta(problem, scheme, delta, option="saga"):
    """Gamma for the perturbed problem: lam and gamma_i scaled by (1 + delta).

    The ``1/(p_i q_k)`` term enters only for the SAGA inner solver.
    """
    t1, t2 = _svrg_terms(problem, scheme, "spectral", shrink=(1.0 + delta) ** 2)
    G = float(max(t1.max(), t2.max()))
    if option == "saga":
        G = max(G, float((1.0 / (scheme.p[:, None] * scheme.q[None, :])).max()))
    return G


def accel_plan(problem, scheme, option="svrg", gamma_scale=1.0):
    """Step sizes, round perturbation and inner budgets for the accelerated solver."""
    if option not in ("svrg", "saga"):
        raise ValueError("option must be 'svrg' or 'saga'")
    kn = condition_numbers(problem, scheme)
    delta = accel_delta(kn.kappa_rand, problem.m)
    Gd = gamma_scale * gamma_delta(problem, scheme, delta, option)
    _check_feasible(Gd, scheme)
    one = 1.0 + delta
    sigma = 1.0 / (2.0 * one * problem.gamma * (scheme.p * Gd - 1.0))
    tau = 1.0 / (2.0 * one * problem.lam * (scheme.q * Gd - 1.0))
    if option == "svrg":
        S = accel_stages(delta)
        M = math.ceil(math.log(3.0) * Gd)
    else:
        S = None
        M = math.ceil(6.0 * math.log(8.0 * one / 3.0) * Gd)
    return StepSizePlan(sigma, tau, Gamma=Gd, delta=delta, source=f"accel-{option}", M=M, S=S,
                        single_round=(delta == 0.0), extras={"kappa_rand": kn.kappa_rand})


def practical_plan(problem, eta_d=20.0, eta_p=20.0, accelerated=False, delta=None):
    """Tuned step sizes driven by the largest row norm R.

    Non-accelerated: ``sigma = eta_d (lam/R^2)(m/N)``, ``tau = eta_p nu/R^2``.
    Accelerated: ``sigma = eta_d/(n R) sqrt(m lam/nu) (m/N)``,
    ``tau = eta_p/R sqrt(nu/(m lam))``.
    """
    if not (eta_d > 0 and eta_p > 0):
        raise ValueError("eta_d and eta_p must be positive")
    R = float(problem.data.row_norms().max()) if problem.N else 0.0
    if R == 0.0:
        raise DegenerateDataError("all rows are zero; R = 0")
    m, n, N, lam, nu = problem.m, problem.n, problem.N, problem.lam, problem.nu
    if accelerated:
        s = eta_d / (n * R) * math.sqrt(m * lam / nu) * (m / N)
        t = eta_p / R * math.sqrt(nu / (m * lam))
        if delta is None:
            # kappa_rand = R^2 / (lam nu) for row-normalized ERM
            delta = accel_delta(R * R / (lam * nu), m)
    else:
        s = eta_d * lam / (R * R) * (m / N)
        t = eta_p * nu / (R * R)
    return StepSizePlan(np.full(m, s), np.full(n, t), delta=delta,
                        source="practical-accel" if accelerated else "practical",
                        extras={"R": R, "eta_d": eta_d, "eta_p": eta_p})
