import numpy as np
import pytest

from conftest import f1_problem
from dscovr.baselines import local_solutions, optimality_residual, run_apg, run_pgd, saddle_oracle
from dscovr.data import make_problem, synth_problem
from dscovr.errors import OracleError
from dscovr.problem import duality_gap, omega


def first_pass_below(res, key, tol):
    return next((c.passes for c in res.checkpoints if getattr(c, key) <= tol), np.inf)


def test_pgd_f1_converges(f1):
    ref = saddle_oracle(f1)
    res = run_pgd(f1, iters=500, reference=ref)
    assert first_pass_below(res, "omega", 1e-8) <= 2 * 500


def test_apg_beats_pgd_on_ill_conditioned_problem():
    pr = synth_problem(300, 40, 3, 4, "smoothed_hinge", 1e-4, seed=1)
    ref = saddle_oracle(pr)
    pgd = run_pgd(pr, iters=3000, reference=ref)
    apg = run_apg(pr, iters=3000, reference=ref)
    assert first_pass_below(apg, "primal_gap", 1e-8) < first_pass_below(pgd, "primal_gap", 1e-8)
    primal = [c.primal for c in apg.checkpoints]
    assert all(b <= a + 1e-15 for a, b in zip(primal, primal[1:]))


def test_oracle_zero_labels():
    rng = np.random.default_rng(0)
    pr = make_problem(rng.standard_normal((6, 4)), np.zeros(6), 2, 2, "quadratic", 0.3)
    star = saddle_oracle(pr)
    assert np.allclose(star.w, 0.0) and np.allclose(star.alpha, 0.0)


@pytest.mark.parametrize("loss", ["quadratic", "smoothed_hinge", "logistic"])
def test_oracle_is_a_saddle_point(loss):
    pr = synth_problem(120, 15, 3, 4, loss, 0.01, seed=2)
    star = saddle_oracle(pr)
    assert optimality_residual(pr, star.w) <= 1e-10
    assert duality_gap(pr, star) <= 1e-9


def test_oracle_error_on_unreachable_tolerance():
    pr = synth_problem(60, 10, 2, 2, "smoothed_hinge", 1e-3, seed=0)
    with pytest.raises(OracleError):
        saddle_oracle(pr, tol=1e-300)


def test_start_at_optimum_is_a_fixed_point(small):
    pr, ref, _ = small
    res = run_pgd(pr, w0=ref.w, iters=50, tol=1e-12, reference=ref)
    assert res.iterations == 1
    assert res.checkpoints[-1].omega <= 1e-20


def test_huge_lambda_single_prox_step():
    pr = synth_problem(40, 8, 2, 2, "quadratic", 1e8, seed=0)
    res = run_apg(pr, w0=np.ones(8), iters=1)
    assert np.max(np.abs(res.state.w)) <= 1e-7


def test_pass_counting(f1):
    res = run_pgd(f1, iters=7)
    assert res.passes == 14 and res.checkpoints[-1].passes == 14


def test_local_solutions_single_worker_is_global():
    pr = synth_problem(80, 10, 1, 2, "logistic", 0.01, seed=4)
    (w_local,) = local_solutions(pr)
    # residual 1e-8 with strong convexity 0.01 bounds the distance by about 1e-6
    assert np.linalg.norm(w_local - saddle_oracle(pr).w) <= 1e-5


def test_local_solutions_duplicated_blocks():
    X1 = np.random.default_rng(3).standard_normal((10, 5))
    y1 = np.sign(X1[:, 0] + 0.1)
    pr = make_problem(np.vstack([X1, X1]), np.concatenate([y1, y1]), 2, 1, "smoothed_hinge", 0.05)
    a, b = local_solutions(pr)
    assert np.linalg.norm(a - b) <= 1e-8
    assert np.linalg.norm(a - saddle_oracle(pr).w) <= 1e-6


def test_oracle_omega_against_pgd():
    pr = f1_problem("smoothed_hinge", 0.5)
    ref = saddle_oracle(pr)
    res = run_apg(pr, iters=2000, reference=ref, tol=1e-13)
    assert omega(pr, res.state, ref) <= 1e-12
