"""Discrete-event simulation of the worker / server / scheduler system.

The simulator is single threaded and deterministic for a given seed.  Actors
(``m`` workers, ``h`` servers, one scheduler) exchange :class:`Message`
objects through a priority queue keyed by ``(deliver_time, seq)``.  Every
block update is computed with the same kernels as the sequential engines in
:mod:`dscovr.core`, and the order in which updates commit is logged, so a
run can be replayed bit-exactly through ``run_dscovr_svrg`` or
``run_dscovr_saga`` via their ``indices`` argument.

Storage: servers own the primal blocks ``w_k`` (plus ``w_tilde_k`` when
accelerated, and ``v_bar_k`` for SAGA); workers own ``alpha_i`` and
their local snapshot or table quantities.  For observation the simulator
keeps those pieces in one mirror :class:`SaddleState`; an actor only
touches the slices it owns.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import (
    DIVERGENCE_FACTOR,
    RoundAnchor,
    RunResult,
    SagaTables,
    Tracker,
    _apply,
    _setup,
    saga_block_gradients,
    svrg_block_gradients,
    svrg_snapshot,
)
from .errors import ProtocolError, UsageError
from .stepsizes import accel_plan

SYNC_KINDS = ("SyncStart", "ReduceContribution", "Broadcast")
ASYNC_KINDS = ("BlockPayload", "BlockReturn")
CONTROL_KINDS = ("BlockRequest", "BlockAssign", "RoundSwitch")


# ---------------------------------------------------------------------------
# messages, free set, ledger, clock, trace


@dataclass
class Message:
    kind: str
    src: str
    dst: str
    send_time: float
    deliver_time: float
    size: float = 0.0
    worker: int | None = None
    block: int | None = None
    finished: int | None = None

    def __post_init__(self):
        if self.deliver_time < self.send_time:
            raise ProtocolError(f"{self.kind} delivered before it was sent")
        if self.kind not in SYNC_KINDS + ASYNC_KINDS + CONTROL_KINDS:
            raise ProtocolError(f"unknown message kind {self.kind!r}")


class FreeSet:
    """Blocks not currently assigned to a worker, plus the in-flight map."""

    def __init__(self, n):
        self.n = n
        self.free = set(range(n))
        self.in_flight = {}

    def holder(self, worker):
        for b, w in self.in_flight.items():
            if w == worker:
                return b
        return None

    def release(self, block, worker):
        if self.in_flight.get(block) != worker:
            raise ProtocolError(f"worker {worker} returned block {block} it does not hold")
        del self.in_flight[block]
        self.free.add(block)

    def take(self, block, worker):
        if block not in self.free:
            raise ProtocolError(f"block {block} is not free")
        if self.holder(worker) is not None:
            raise ProtocolError(f"worker {worker} already holds block {self.holder(worker)}")
        self.free.remove(block)
        self.in_flight[block] = worker

    def reset(self):
        if self.in_flight:
            raise ProtocolError("reset while blocks are in flight")
        self.free = set(range(self.n))

    def check(self):
        held = set(self.in_flight)
        workers = list(self.in_flight.values())
        assert not (held & self.free), "block both free and in flight"
        assert held | self.free == set(range(self.n)), "block lost"
        assert len(workers) == len(set(workers)), "worker holds two blocks"


def scheduler_assign(freeset, request, rng, q=None):
    """Serve ``request = (worker, finished_block)``; returns ``(block, freeset)``.

    The finished block (if any) re-enters the free set; the new block is
    drawn uniformly (or proportionally to ``q`` when given) from the free
    set, excluding the block just returned unless it is the only one free.
    """
    worker, finished = request
    held = freeset.holder(worker)
    if finished is not None:
        freeset.release(finished, worker)
    elif held is not None:
        raise ProtocolError(f"worker {worker} requests while holding block {held}")
    pool = sorted(freeset.free)
    if not pool:
        raise ProtocolError("no free block to assign")
    if finished is not None and len(pool) > 1:
        pool.remove(finished)
    if q is None:
        block = pool[int(rng.integers(len(pool)))]
    else:
        w = np.asarray(q, dtype=float)[pool]
        block = pool[int(rng.choice(len(pool), p=w / w.sum()))]
    freeset.take(block, worker)
    return block, freeset


@dataclass
class CommLedger:
    """Communication counters.

    ``sync_vectors`` counts length-``d`` vector equivalents moved by
    collectives, ``async_floats`` counts floats in point-to-point block
    traffic, ``control_count`` counts the short request/assign messages and
    ``eval_vectors`` the collectives spent only on monitoring.
    """

    d: int
    sync_vectors: float = 0.0
    async_floats: float = 0.0
    control_count: int = 0
    eval_vectors: float = 0.0
    stages: list = field(default_factory=list)

    def add(self, msg):
        if msg.kind in SYNC_KINDS:
            self.sync_vectors += msg.size / self.d
        elif msg.kind in ASYNC_KINDS:
            self.async_floats += msg.size
        else:
            self.control_count += 1

    @property
    def async_vectors(self):
        return self.async_floats / self.d

    def snapshot(self):
        return {"sync_vectors": self.sync_vectors, "async_vector_equivalents": self.async_vectors,
                "control_count": self.control_count, "eval_vectors": self.eval_vectors}

    def close_stage(self, label):
        self.stages.append({"stage": label, **self.snapshot()})


@dataclass
class ClockModel:
    """Virtual-time costs of block computations and message deliveries.

    Noisy mode: compute time ``unit * nnz(X_ik)`` times lognormal noise,
    latency exponential with mean ``latency``.  Deterministic mode: every
    block computation costs ``unit`` and every message ``latency``.
    """

    unit: float = 1e-6
    noise: float = 0.2
    latency: float = 1e-3
    seed: int = 0
    deterministic: bool = False

    def __post_init__(self):
        if self.unit <= 0 or self.latency < 0 or self.noise < 0:
            raise ValueError("clock parameters must be nonnegative (unit positive)")
        if not self.deterministic and self.latency == 0:
            raise ValueError("noisy clock needs a positive mean latency")
        self.rng = np.random.default_rng(self.seed)

    @classmethod
    def fixed(cls, unit=1.0, latency=0.0):
        return cls(unit=unit, noise=0.0, latency=latency, deterministic=True)

    def compute(self, nnz):
        if self.deterministic:
            return self.unit
        return self.unit * max(int(nnz), 1) * float(self.rng.lognormal(0.0, self.noise))

    def delay(self):
        if self.deterministic:
            return self.latency
        return float(self.rng.exponential(self.latency))

    def collective(self, m):
        # tree-structured all-reduce: about 2 log2(m) hops
        hops = 2 * max(1, int(np.ceil(np.log2(max(m, 2)))))
        return sum(self.delay() for _ in range(hops))


@dataclass
class TraceRecord:
    virtual_time: float
    actor: str
    kind: str
    size_floats: float


class EventTrace:
    def __init__(self, enabled=True):
        self.enabled = enabled
        self.records = []

    def log(self, t, actor, kind, size):
        if self.enabled:
            self.records.append(TraceRecord(float(t), actor, kind, float(size)))

    def to_jsonl(self, stream):
        for r in self.records:
            stream.write(json.dumps(asdict(r)) + "\n")

    def __len__(self):
        return len(self.records)


@dataclass
class Topology:
    m: int
    h: int = 1

    def server_of(self, block):
        return block % self.h


# ---------------------------------------------------------------------------
# simulator


class Simulator:
    """Event-driven execution of DSCOVR stages on a simulated cluster."""

    def __init__(self, problem, plan, scheme, topology=None, clock=None, seed=0, *, w0=None, a0=None,
                 dual="prox", reference=None, hooks=(), track=True, checkpoint_every=None, q_weighted=False,
                 divergence_factor=DIVERGENCE_FACTOR, trace=True):
        m, n = problem.m, problem.n
        topology = topology or Topology(m, 1)
        if topology.m != m:
            raise UsageError("topology.m must equal the number of row blocks")
        if not n > m > 0 or topology.h < 1:
            raise UsageError("the simulator needs n > m > 0 and h >= 1")
        self.problem, self.plan, self.scheme, self.topo = problem, plan, scheme, topology
        self.clock = clock if clock is not None else ClockModel(seed=seed)
        ss = np.random.SeedSequence(seed)
        self.rng = np.random.default_rng(ss.spawn(1)[0])
        self.state, self.breg, _ = _setup(problem, w0, a0, dual, None, seed, self.rng)
        self.initial = self.state.copy()
        self.ledger = CommLedger(problem.d)
        self.trace = EventTrace(trace)
        self.free = FreeSet(n)
        self.q = scheme.q if q_weighted else None
        self.now = 0.0
        self.seq = 0
        self.queue = []
        self.log = []
        self.tracker = Tracker(problem, reference, hooks, track, checkpoint_every, divergence_factor,
                               annotate=self.ledger.snapshot)
        self.tracker.time = 0.0
        self.tracker.record(self.state, "start")
        # accelerated: anchors live with the owners (servers hold w_tilde, workers alpha_tilde)
        self.anchor = None
        self.round = -1

    # -- plumbing --------------------------------------------------------
    def _send(self, kind, src, dst, size=0.0, delay=None, **kw):
        delay = self.clock.delay() if delay is None else delay
        msg = Message(kind, src, dst, self.now, self.now + delay, size, **kw)
        self.ledger.add(msg)
        self.trace.log(self.now, src, kind, size)
        self._push(msg.deliver_time, msg)

    def _push(self, t, item):
        heapq.heappush(self.queue, (t, self.seq, item))
        self.seq += 1

    def _block_size(self, k):
        return float(self.problem.data.col_part.sizes[k])

    def _collective(self, kind, count, label):
        """``count`` vectors of length d moved by one synchronous collective."""
        for i in range(count):
            msg = Message(kind, f"worker{i % self.topo.m}", "all", self.now, self.now, float(self.problem.d))
            self.ledger.add(msg)
            self.trace.log(self.now, msg.src, kind, msg.size)
        self.now += self.clock.collective(self.topo.m)
        self.tracker.time = self.now

    # -- accelerated round switch ---------------------------------------
    def set_anchor(self, anchor):
        self.anchor = anchor
        self.round = anchor.round_index if anchor is not None else -1

    # -- one asynchronous epoch -------------------------------------------
    def _epoch(self, iterations, kind):
        """Run ``iterations`` block updates asynchronously, then drain."""
        pb, m = self.problem, self.topo.m
        rp, cp = pb.data.row_part, pb.data.col_part
        self.free.reset()
        assigned = 0
        committed = 0
        checked_out = set()  # blocks whose payload is out at a worker (server side)
        waiting = {}  # block -> pending assign (worker) held back until the block returns
        accel = self.anchor is not None and self.anchor.delta
        base = 1.0 if kind == "svrg" else 2.0
        down = base + (1.0 if accel else 0.0)

        # worker requests at the epoch start
        for i in range(m):
            self._send("BlockRequest", f"worker{i}", "scheduler", worker=i, finished=None)
        while self.queue:
            t, _, item = heapq.heappop(self.queue)
            self.now = t
            self.tracker.time = t
            if isinstance(item, tuple):  # compute finished at worker: commit the update
                _, i, k = item
                rs, cs = rp.slice(i), cp.slice(k)
                if kind == "svrg":
                    u, v = svrg_block_gradients(pb, self.scheme, i, k, self.state.w[cs], self.state.alpha[rs],
                                                self.stage.w_bar[cs], self.stage.alpha_bar[rs],
                                                self.stage.u_bar[rs], self.stage.v_bar[cs])
                else:
                    tb = self.tables
                    u, v, nU, nV = saga_block_gradients(pb, self.scheme, i, k, self.state.w[cs],
                                                        self.state.alpha[rs], tb.u_bar[rs], tb.v_bar[cs],
                                                        tb.U[i][k], tb.V[i][k])
                    tb.u_bar[rs] += nU - tb.U[i][k]
                    tb.v_bar[cs] += nV - tb.V[i][k]
                    tb.U[i][k] = nU
                    tb.V[i][k] = nV
                _apply(pb, self.plan, self.state, i, k, u, v, self.breg[i] if self.breg else None, self.anchor)
                self.log.append((i, k))
                committed += 1
                self.tracker.tick(self.state)
                self._send("BlockReturn", f"worker{i}", f"server{self.topo.server_of(k)}",
                           base * self._block_size(k), block=k, worker=i)
                self._send("BlockRequest", f"worker{i}", "scheduler", worker=i, finished=k)
                continue
            msg = item
            if msg.kind == "BlockRequest":
                if assigned >= iterations:
                    if msg.finished is not None:
                        self.free.release(msg.finished, msg.worker)
                    continue
                k, _ = scheduler_assign(self.free, (msg.worker, msg.finished), self.rng, self.q)
                assigned += 1
                self._send("BlockAssign", "scheduler", f"server{self.topo.server_of(k)}", worker=msg.worker,
                           block=k)
            elif msg.kind == "BlockAssign":
                k = msg.block
                if k in checked_out:
                    if k in waiting:
                        raise ProtocolError(f"two pending holders of block {k}")
                    waiting[k] = msg.worker
                    continue
                checked_out.add(k)
                self._send("BlockPayload", msg.dst, f"worker{msg.worker}", down * self._block_size(k),
                           worker=msg.worker, block=k)
            elif msg.kind == "BlockPayload":
                i, k = msg.worker, msg.block
                self._push(self.now + self.clock.compute(pb.data.nnz[i, k]), ("done", i, k))
            elif msg.kind == "BlockReturn":
                k = msg.block
                checked_out.discard(k)
                if k in waiting:
                    wk = waiting.pop(k)
                    checked_out.add(k)
                    self._send("BlockPayload", msg.dst, f"worker{wk}", down * self._block_size(k),
                               worker=wk, block=k)
            else:
                raise ProtocolError(f"unexpected message {msg.kind}")
        if committed != iterations or self.free.in_flight or checked_out:
            raise ProtocolError("epoch ended with outstanding blocks")
        self.free.check()

    # -- algorithms -------------------------------------------------------
    def run_svrg(self, S, M):
        m = self.topo.m
        for s in range(S):
            # collectives: w_bar to every worker, then all-reduce of v_bar
            self._collective("Broadcast", m, "w_bar")
            self._collective("ReduceContribution", m, "v_bar")
            self.stage = svrg_snapshot(self.problem, self.state)
            self.tracker.passes += 1.0
            self._epoch(M, "svrg")
            self.ledger.close_stage(f"r{self.round}s{s}" if self.round >= 0 else f"s{s}")
            self.tracker.record(self.state, "stage")

    def run_saga(self, M, keep_tables=False):
        if not (keep_tables and getattr(self, "tables", None) is not None):
            nonzero = bool(np.any(self.state.w) or np.any(self.state.alpha))
            if nonzero:
                # one collective to propagate a nonzero start to all actors
                self._collective("ReduceContribution", self.topo.m, "init")
            self.tables = SagaTables(self.problem, self.state)
            self.tracker.passes += 1.0
        self._epoch(M, "saga")
        self.ledger.close_stage(f"r{self.round}" if self.round >= 0 else "saga")
        self.tracker.record(self.state, "stage")

    def result(self, seed, **extras):
        tr = self.tracker
        tr.record(self.state, "final")
        return RunResult(self.state, tr.checkpoints, seed, tr.iteration, tr.passes,
                         np.array(self.log, dtype=int).reshape(-1, 2),
                         extras={"virtual_seconds": self.now, "ledger": self.ledger, **extras})


def simulate_svrg(problem, plan, scheme, topology=None, clock=None, S=10, M=None, seed=0, **kw):
    """Asynchronous DSCOVR-SVRG.  Returns ``(RunResult, CommLedger, EventTrace)``."""
    M = plan.M if M is None else M
    sim = Simulator(problem, plan, scheme, topology, clock, seed, **kw)
    sim.run_svrg(S, M)
    return sim.result(seed), sim.ledger, sim.trace


def simulate_saga(problem, plan, scheme, topology=None, clock=None, M=None, seed=0, **kw):
    """Asynchronous DSCOVR-SAGA.  Returns ``(RunResult, CommLedger, EventTrace)``."""
    M = plan.M if M is None else M
    sim = Simulator(problem, plan, scheme, topology, clock, seed, **kw)
    sim.run_saga(M)
    return sim.result(seed), sim.ledger, sim.trace


def accel_round_switch(sim, round_index, delta):
    """Refresh every anchor to the current blocks at one virtual instant.

    Servers copy ``w_k`` into ``w_tilde_k`` and workers copy ``alpha_i`` (or
    the conjugate-free point) locally; only short control notices are sent,
    so the synchronous and block-traffic counters do not move.
    """
    anchor = RoundAnchor(sim.state.w.copy(), sim.state.alpha.copy(), delta, round_index)
    if sim.breg is not None:
        for b in sim.breg:
            b.set_anchor()
    for _ in range(sim.topo.h):
        sim.ledger.control_count += 1
        sim.trace.log(sim.now, "scheduler", "RoundSwitch", 0.0)
    sim.set_anchor(anchor)
    return anchor


def simulate_accelerated(problem, scheme, option="svrg", topology=None, clock=None, rounds=5, seed=0,
                         plan=None, S=None, M=None, **kw):
    """Asynchronous accelerated DSCOVR.  Returns ``(RunResult, CommLedger, EventTrace)``.

    Every round is a fixed budget of inner SVRG stages or SAGA iterations
    run against frozen anchors; ``delta == 0`` runs a single unperturbed
    round of ``rounds`` times the per-round budget.
    """
    plan = accel_plan(problem, scheme, option) if plan is None else plan
    delta = float(plan.delta or 0.0)
    S = (plan.S or 1) if S is None else S
    M = plan.M if M is None else M
    sim = Simulator(problem, plan, scheme, topology, clock, seed, **kw)
    bounds = []
    if delta == 0.0:
        if option == "svrg":
            sim.run_svrg(rounds * S, M)
        else:
            sim.run_saga(rounds * M)
        sim.tracker.record(sim.state, "round")
        bounds.append(len(sim.log))
        n_rounds = 1
    else:
        for r in range(rounds):
            accel_round_switch(sim, r, delta)
            if option == "svrg":
                sim.run_svrg(S, M)
            else:
                sim.run_saga(M, keep_tables=True)
            sim.tracker.record(sim.state, "round")
            bounds.append(len(sim.log))
        n_rounds = rounds
    logs = np.split(np.array(sim.log, dtype=int).reshape(-1, 2), bounds[:-1])
    return sim.result(seed, rounds=n_rounds, delta=delta, round_indices=logs), sim.ledger, sim.trace
