import io
import json

import numpy as np
import pytest

from dscovr.accelerated import run_accelerated
from dscovr.core import run_dscovr_saga, run_dscovr_svrg
from dscovr.data import synth_problem
from dscovr.errors import ProtocolError, UsageError
from dscovr.harness import (
    ClockModel,
    FreeSet,
    Message,
    Simulator,
    Topology,
    accel_round_switch,
    scheduler_assign,
    simulate_accelerated,
    simulate_saga,
    simulate_svrg,
)
from dscovr.stepsizes import SamplingScheme, accel_plan, plan_theorem1, stepsizes_saga


@pytest.fixture(scope="module")
def grid():
    pr = synth_problem(80, 20, 4, 5, "quadratic", 0.1, seed=3)
    return pr, SamplingScheme.uniform(4, 5)


def test_scheduler_forced_choice():
    fs = FreeSet(6)
    for worker, block in enumerate([0, 1, 2, 4]):
        fs.take(block, worker)
    fs.take(5, 9)
    block, fs = scheduler_assign(fs, (9, 5), np.random.default_rng(0))
    assert block == 3 and fs.free == {5}
    fs.check()


def test_scheduler_excludes_returned_block_when_possible():
    rng = np.random.default_rng(1)
    fs = FreeSet(3)
    fs.take(0, 0)
    for _ in range(50):
        prev = fs.holder(0)
        block, fs = scheduler_assign(fs, (0, prev), rng)
        assert block != prev and fs.holder(0) == block
    only = FreeSet(1)
    only.take(0, 0)
    assert scheduler_assign(only, (0, 0), rng)[0] == 0


def test_scheduler_protocol_errors():
    rng = np.random.default_rng(0)
    fs = FreeSet(3)
    fs.take(1, 0)
    with pytest.raises(ProtocolError):
        scheduler_assign(fs, (0, None), rng)
    with pytest.raises(ProtocolError):
        fs.take(1, 2)
    with pytest.raises(ProtocolError):
        fs.release(2, 0)
    with pytest.raises(ProtocolError):
        Message("BlockPayload", "a", "b", 1.0, 0.5)
    with pytest.raises(ProtocolError):
        Message("Gossip", "a", "b", 0.0, 0.0)


def test_requires_more_column_blocks_than_workers():
    pr = synth_problem(20, 8, 4, 4, "quadratic", 0.1, seed=0)
    with pytest.raises(UsageError):
        Simulator(pr, plan_theorem1(pr, SamplingScheme.uniform(4, 4)), SamplingScheme.uniform(4, 4))


def test_fixed_clock_is_round_robin(grid):
    pr, sch = grid
    res, _, _ = simulate_svrg(pr, plan_theorem1(pr, sch), sch, clock=ClockModel.fixed(), S=1, M=40, seed=0)
    assert np.array_equal(res.indices[:, 0], np.tile(np.arange(4), 10))


@pytest.mark.parametrize("clock", [ClockModel.fixed(), ClockModel(seed=4)], ids=["fixed", "noisy"])
def test_replay_matches_sequential_engines(grid, clock):
    pr, sch = grid
    plan = plan_theorem1(pr, sch)
    res, _, _ = simulate_svrg(pr, plan, sch, Topology(4, 2), clock, S=2, M=60, seed=1)
    seq = run_dscovr_svrg(pr, plan, sch, S=2, M=60, indices=res.indices)
    assert np.array_equal(res.state.w, seq.state.w) and np.array_equal(res.state.alpha, seq.state.alpha)
    plan = stepsizes_saga(pr, sch)
    res, _, _ = simulate_saga(pr, plan, sch, Topology(4, 3), clock, M=150, seed=2)
    seq = run_dscovr_saga(pr, plan, sch, M=150, indices=res.indices)
    assert np.array_equal(res.state.w, seq.state.w) and np.array_equal(res.state.alpha, seq.state.alpha)


def test_svrg_ledger(grid):
    pr, sch = grid
    M = 100
    res, ledger, _ = simulate_svrg(pr, plan_theorem1(pr, sch), sch, S=3, M=M, seed=0)
    assert [s["sync_vectors"] for s in ledger.stages] == [8, 16, 24]
    # each iteration moves one primal block down and one back: 2 d_k floats
    assert ledger.async_floats / (3 * M) == pytest.approx(2 * pr.d / pr.n)
    assert ledger.control_count >= 2 * 3 * M
    assert res.extras["virtual_seconds"] > 0


def test_saga_ledger(grid):
    pr, sch = grid
    plan = stepsizes_saga(pr, sch)
    _, ledger, _ = simulate_saga(pr, plan, sch, M=100, seed=0)
    assert ledger.sync_vectors == 0
    assert ledger.async_floats / 100 == pytest.approx(4 * pr.d / pr.n)
    _, ledger, _ = simulate_saga(pr, plan, sch, M=100, seed=0, w0=np.ones(pr.d))
    assert ledger.sync_vectors == 4


def test_round_switch_moves_only_control_messages(grid):
    pr, sch = grid
    sim = Simulator(pr, plan_theorem1(pr, sch), sch, Topology(4, 2), seed=0)
    before = (sim.ledger.sync_vectors, sim.ledger.async_floats, sim.ledger.control_count)
    anchor = accel_round_switch(sim, 0, 1.5)
    assert (sim.ledger.sync_vectors, sim.ledger.async_floats) == before[:2]
    assert sim.ledger.control_count == before[2] + 2
    assert np.array_equal(anchor.w_tilde, sim.state.w) and anchor.delta == 1.5


@pytest.mark.parametrize("option", ["svrg", "saga"])
def test_accelerated_replay(option):
    pr = synth_problem(60, 12, 2, 3, "quadratic", 1e-3, seed=1)
    sch = SamplingScheme.uniform(2, 3)
    plan = accel_plan(pr, sch, option)
    assert plan.delta > 0
    kw = dict(S=1, M=30) if option == "svrg" else dict(M=60)
    res, ledger, _ = simulate_accelerated(pr, sch, option, Topology(2, 1), ClockModel(seed=1), rounds=3, seed=0,
                                          plan=plan, **kw)
    seq = run_accelerated(pr, sch, option, rounds=3, plan=plan, indices=res.extras["round_indices"], **kw)
    assert np.array_equal(res.state.w, seq.state.w) and np.array_equal(res.state.alpha, seq.state.alpha)
    # accelerated payloads carry the anchor block as well
    per_iter = ledger.async_floats / res.iterations
    assert per_iter == pytest.approx((3 if option == "svrg" else 5) * pr.d / pr.n)


def test_trace_export_and_determinism(grid):
    pr, sch = grid
    plan = plan_theorem1(pr, sch)
    a = simulate_svrg(pr, plan, sch, S=1, M=30, seed=5)
    b = simulate_svrg(pr, plan, sch, S=1, M=30, seed=5)
    assert np.array_equal(a[0].indices, b[0].indices)
    buf = io.StringIO()
    a[2].to_jsonl(buf)
    rows = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert len(rows) == len(a[2])
    assert set(rows[0]) == {"virtual_time", "actor", "kind", "size_floats"}
    times = [r["virtual_time"] for r in rows]
    assert times == sorted(times)


def test_checkpoints_carry_ledger_snapshots(grid):
    pr, sch = grid
    res, ledger, _ = simulate_svrg(pr, plan_theorem1(pr, sch), sch, S=2, M=40, seed=0)
    last = res.checkpoints[-1]
    assert last.info["sync_vectors"] == ledger.sync_vectors
    assert np.isfinite(last.time)
