import numpy as np
import pytest

from dscovr.accelerated import run_accelerated
from dscovr.baselines import saddle_oracle
from dscovr.data import synth_problem
from dscovr.errors import NoClosedFormError
from dscovr.problem import omega
from dscovr.stepsizes import SamplingScheme, accel_plan, practical_plan

U22 = SamplingScheme.uniform(2, 2)


@pytest.mark.parametrize("option", ["svrg", "saga"])
def test_f1_rounds_contract(f1, option):
    ref = saddle_oracle(f1)
    res = run_accelerated(f1, U22, option, rounds=4, seed=0, reference=ref)
    assert res.extras["rounds"] == 4 and res.extras["delta"] == pytest.approx(2.266, abs=1e-3)
    om = res.round_omegas()
    assert len(om) == 5
    assert np.all(om[1:] < om[:-1])
    assert res.extras["anchor_stamps"] == [0, 1, 2, 3]


def test_options_agree_on_the_saddle(f1):
    ref = saddle_oracle(f1)
    # near-exact inner solves give the proximal-point rate (delta / (1 + delta))^2 ~ 0.48 per round
    a = run_accelerated(f1, U22, "svrg", rounds=20, seed=1)
    b = run_accelerated(f1, U22, "saga", rounds=20, seed=2)
    assert omega(f1, a.state, b.state) <= 1e-5
    assert omega(f1, a.state, ref) <= 1e-5


def test_zero_delta_runs_a_single_round():
    pr = synth_problem(40, 6, 2, 3, "quadratic", 10.0, seed=0)
    sch = SamplingScheme.uniform(2, 3)
    plan = accel_plan(pr, sch, "svrg")
    assert plan.delta == 0.0
    res = run_accelerated(pr, sch, "svrg", rounds=3, seed=0, plan=plan, M=12)
    assert res.extras["rounds"] == 1
    assert res.iterations == 3 * plan.S * 12


@pytest.mark.parametrize("option", ["svrg", "saga"])
def test_replay_is_bit_exact(f1, option):
    a = run_accelerated(f1, U22, option, rounds=3, seed=5)
    b = run_accelerated(f1, U22, option, rounds=3, seed=6, indices=a.extras["round_indices"])
    assert np.array_equal(a.state.w, b.state.w) and np.array_equal(a.state.alpha, b.state.alpha)


def test_tol_stops_early(f1):
    res = run_accelerated(f1, U22, "svrg", rounds=50, seed=0, tol=1e-6)
    assert res.extras["rounds"] < 50


def test_logistic_needs_bregman():
    pr = synth_problem(60, 8, 2, 4, "logistic", 1e-3, seed=0)
    sch = SamplingScheme.uniform(2, 4)
    plan = practical_plan(pr, 40, 10, accelerated=True)
    with pytest.raises(NoClosedFormError):
        run_accelerated(pr, sch, "svrg", rounds=1, plan=plan, S=1, M=8)
    ref = saddle_oracle(pr)
    res = run_accelerated(pr, sch, "svrg", rounds=150, plan=plan, S=1, M=8, dual="bregman", reference=ref)
    assert res.checkpoints[-1].primal_gap <= 1e-6


def test_bad_arguments(f1):
    with pytest.raises(ValueError):
        run_accelerated(f1, U22, "sgd")
    with pytest.raises(ValueError):
        run_accelerated(f1, U22, "svrg", rounds=0)
