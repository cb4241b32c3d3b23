"""Configuration-driven experiments producing per-run CSV traces and a JSON summary.

Trace columns (in order)::

    pass_equivalents, virtual_seconds, primal_gap, duality_gap,
    omega_to_oracle, sync_vectors, async_vector_equivalents

Communication is in length-``d`` vector equivalents.  ``sync_vectors``
counts collective traffic, ``async_vector_equivalents`` point-to-point block
traffic.  The cost of evaluating the objective for the trace is kept out of
both and reported separately as ``eval_vectors`` in the summary.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import time
import warnings
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .baselines import local_solutions, run_apg, run_pgd, saddle_oracle
from .data import make_problem, normalize_rows, parse_libsvm, synth_data
from .errors import ConfigError, StallError
from .harness import ClockModel, Topology, simulate_accelerated, simulate_saga, simulate_svrg
from .losses import FAMILIES
from .problem import dual_value, primal_value
from .stepsizes import (
    accel_plan,
    make_scheme,
    plan_theorem1,
    practical_plan,
    stepsizes_saga,
    stepsizes_theorem2,
)

TRACE_COLUMNS = (
    "pass_equivalents",
    "virtual_seconds",
    "primal_gap",
    "duality_gap",
    "omega_to_oracle",
    "sync_vectors",
    "async_vector_equivalents",
)
ALGORITHMS = ("svrg", "saga", "accl-svrg", "accl-saga", "pgd", "apg")
STEP_MODES = ("auto", "theorem1", "theorem2", "saga", "accel", "practical")
DSCOVR = ("svrg", "saga", "accl-svrg", "accl-saga")
SCHEMA_NAME = "summary.schema.json"


@dataclass
class ExperimentConfig:
    """Flat experiment description.

    ``dataset`` is ``"synthetic"`` or a LIBSVM path (gzip allowed).
    ``eta_d``/``eta_p`` left unset pick 20/20 for plain DSCOVR and 40/10
    for the accelerated variants in practical mode.
    """

    dataset: str = "synthetic"
    N: int = 200
    d: int = 50
    noise: float = 0.1
    data_seed: int = 0
    dim: int | None = None
    normalize: bool = True
    loss: str = "quadratic"
    lam: float = 0.1
    l1: float = 0.0
    m: int = 4
    n: int = 5
    h: int = 2
    scheme: str = "uniform"
    algos: list = field(default_factory=lambda: ["svrg"])
    stepsize: str = "auto"
    eta_d: float | None = None
    eta_p: float | None = None
    S: int = 10
    M: int | None = None
    rounds: int = 5
    iters: int = 100
    seeds: list = field(default_factory=lambda: [0])
    init: str = "zero"
    order: str = "shuffled"
    dual: str = "prox"
    eval_every: float = 10.0
    clock: str = "noisy"
    out: str = "results"

    def validate(self):
        if self.loss not in FAMILIES:
            raise ConfigError("loss", f"unknown loss {self.loss!r}")
        for name in ("N", "d", "m", "n", "h", "S", "rounds", "iters"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if not self.lam > 0:
            raise ConfigError("lam", "must be positive")
        if self.l1 < 0:
            raise ConfigError("l1", "must be nonnegative")
        bad = [a for a in self.algos if a not in ALGORITHMS]
        if bad or not self.algos:
            raise ConfigError("algos", f"choose from {ALGORITHMS}, got {self.algos}")
        if self.stepsize not in STEP_MODES:
            raise ConfigError("stepsize", f"choose from {STEP_MODES}")
        if self.scheme not in ("uniform", "frobenius"):
            raise ConfigError("scheme", "must be uniform or frobenius")
        if self.init not in ("zero", "local-average"):
            raise ConfigError("init", "must be zero or local-average")
        if self.order not in ("shuffled", "sorted", "as_is"):
            raise ConfigError("order", "must be shuffled, sorted or as_is")
        if self.dual not in ("prox", "bregman"):
            raise ConfigError("dual", "must be prox or bregman")
        if self.clock not in ("noisy", "fixed"):
            raise ConfigError("clock", "must be noisy or fixed")
        if self.M is not None and self.M < 1:
            raise ConfigError("M", "must be >= 1")
        if not self.eval_every > 0:
            raise ConfigError("eval_every", "must be positive")
        if any(a in DSCOVR for a in self.algos) and not self.n > self.m:
            raise ConfigError("n", "asynchronous DSCOVR needs n > m")
        if self.h > self.n:
            raise ConfigError("h", "more servers than parameter blocks")
        for name in ("eta_d", "eta_p"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(name, "must be positive")
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _convert(key, raw):
    f = _FIELDS.get(key)
    if f is None:
        raise ConfigError(key, "unknown configuration key")
    raw = raw.strip()
    typ = str(f.type)
    try:
        if key in ("algos",):
            return [s.strip() for s in raw.split(",") if s.strip()]
        if key in ("seeds",):
            return [int(s) for s in raw.split(",") if s.strip()]
        if typ.startswith("bool"):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if "None" in typ and raw.lower() in ("", "none"):
            return None
        if typ.startswith("int"):
            return int(raw)
        if typ.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r}") from None
    return raw


def parse_config_text(text):
    """``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
        values[key.strip()] = _convert(key.strip(), value)
    return values


def load_config(path=None, overrides=None):
    """Defaults, then the file, then ``overrides`` (already-typed or raw strings)."""
    values = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                values.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError("config", str(exc)) from None
    for key, value in (overrides or {}).items():
        values[key] = _convert(key, value) if isinstance(value, str) else value
    for key in values:
        if key not in _FIELDS:
            raise ConfigError(key, "unknown configuration key")
    return ExperimentConfig(**values).validate()


# ---------------------------------------------------------------------------
# problem construction and oracle cache

_ORACLES = {}


def build_problem(cfg):
    if cfg.dataset == "synthetic":
        X, y = synth_data(cfg.N, cfg.d, cfg.loss, cfg.data_seed, noise=cfg.noise)
    else:
        y, X = parse_libsvm(cfg.dataset, cfg.dim)
        if cfg.normalize:
            X = normalize_rows(X)
    order = "sorted_by_label" if cfg.order == "sorted" else cfg.order
    return make_problem(X, y, cfg.m, cfg.n, cfg.loss, cfg.lam, order, cfg.data_seed, cfg.l1)


def _problem_key(cfg):
    keys = ("dataset", "N", "d", "noise", "data_seed", "dim", "normalize", "loss", "lam", "l1", "m", "n", "order")
    return tuple(getattr(cfg, k) for k in keys)


def cached_oracle(cfg, problem):
    """One saddle-point oracle per distinct problem."""
    key = _problem_key(cfg)
    if key not in _ORACLES:
        _ORACLES[key] = saddle_oracle(problem)
    return _ORACLES[key]


def warm_start_average(problem, tol=1e-8):
    """Average of the workers' local regularized solutions.

    Returns ``(w0, sync_vectors)``; the averaging is one collective over
    ``m`` workers.  A stalled local solve falls back to ``w0 = 0``.
    """
    try:
        sols = local_solutions(problem, tol=tol)
    except StallError as exc:
        warnings.warn(f"local warm start failed ({exc}); using zero init", RuntimeWarning, stacklevel=2)
        return np.zeros(problem.d), 0.0
    return np.mean(sols, axis=0), float(problem.m)


# ---------------------------------------------------------------------------
# running one cell


def _plan_for(cfg, algo, problem, scheme):
    mode = cfg.stepsize
    accel = algo.startswith("accl")
    if mode == "auto":
        mode = {"svrg": "theorem1", "saga": "saga"}.get(algo, "accel")
    if mode == "practical":
        eta_d = cfg.eta_d if cfg.eta_d is not None else (40.0 if accel else 20.0)
        eta_p = cfg.eta_p if cfg.eta_p is not None else (10.0 if accel else 20.0)
        plan = practical_plan(problem, eta_d, eta_p, accelerated=accel)
        if accel:
            plan.S = cfg.S
        plan.M = cfg.M or problem.m * problem.n
        return plan
    if accel:
        if mode != "accel":
            raise ConfigError("stepsize", f"{mode} does not apply to {algo}")
        plan = accel_plan(problem, scheme, algo.split("-")[1])
    elif mode == "theorem1":
        plan = plan_theorem1(problem, scheme)
    elif mode == "theorem2":
        plan = stepsizes_theorem2(problem, scheme)
    elif mode == "saga":
        plan = stepsizes_saga(problem, scheme)
    else:
        raise ConfigError("stepsize", f"{mode} does not apply to {algo}")
    if cfg.M is not None:
        plan.M = cfg.M
    return plan


def _rows_from_checkpoints(checkpoints, offset_sync=0.0):
    rows = []
    for cp in checkpoints:
        info = cp.info or {}
        rows.append((cp.passes, cp.time, cp.primal_gap, cp.duality_gap, cp.omega,
                     info.get("sync_vectors", 0.0) + offset_sync, info.get("async_vector_equivalents", 0.0)))
    return rows


def run_cell(cfg, algo, seed, problem=None, reference=None):
    """Run one (algorithm, seed) cell; returns ``(rows, record)``."""
    problem = build_problem(cfg) if problem is None else problem
    reference = cached_oracle(cfg, problem) if reference is None else reference
    scheme = make_scheme(cfg.scheme, problem)
    w0, init_sync = (None, 0.0)
    if cfg.init == "local-average":
        w0, init_sync = warm_start_average(problem)
    every = max(1, int(round(cfg.eval_every * problem.m * problem.n)))
    started = time.perf_counter()
    if algo in DSCOVR:
        clock = ClockModel(seed=seed) if cfg.clock == "noisy" else ClockModel.fixed(unit=1e-6, latency=1e-3)
        topo = Topology(problem.m, cfg.h)
        plan = _plan_for(cfg, algo, problem, scheme)
        kw = dict(w0=w0, reference=reference, checkpoint_every=every, dual=cfg.dual, trace=False)
        evals = []
        kw["hooks"] = (lambda it, passes, state: evals.append(it),)
        if algo == "svrg":
            res, ledger, _ = simulate_svrg(problem, plan, scheme, topo, clock, S=cfg.S, seed=seed, **kw)
        elif algo == "saga":
            res, ledger, _ = simulate_saga(problem, plan, scheme, topo, clock, seed=seed, **kw)
        else:
            res, ledger, _ = simulate_accelerated(problem, scheme, algo.split("-")[1], topo, clock,
                                                  rounds=cfg.rounds, seed=seed, plan=plan, **kw)
        ledger.eval_vectors = float(problem.m * len(evals))
        rows = _rows_from_checkpoints(res.checkpoints, init_sync)
        comm = {"sync_vectors": ledger.sync_vectors + init_sync, "async_vector_equivalents": ledger.async_vectors,
                "control_messages": ledger.control_count, "eval_vectors": ledger.eval_vectors}
        vsec = res.extras["virtual_seconds"]
    else:
        runner = run_pgd if algo == "pgd" else run_apg
        res = runner(problem, w0=w0, iters=cfg.iters, reference=reference)
        clock = ClockModel(seed=seed) if cfg.clock == "noisy" else ClockModel.fixed(unit=1e-6, latency=1e-3)
        # each iteration: gradient work on the slowest worker plus two collectives
        nnz_rows = problem.data.nnz.sum(axis=1)
        per_iter = [2 * max(clock.compute(z) for z in nnz_rows) + 2 * clock.collective(problem.m)
                    for _ in range(res.iterations)]
        times = np.concatenate([[0.0], np.cumsum(per_iter)])
        rows = []
        step = max(1, int(round(cfg.eval_every / 2.0)))
        for cp in res.checkpoints:
            if cp.iteration % step and cp is not res.checkpoints[-1]:
                continue
            rows.append((cp.passes, float(times[cp.iteration]), cp.primal_gap, cp.duality_gap, cp.omega,
                         2.0 * problem.m * cp.iteration + init_sync, 0.0))
        comm = {"sync_vectors": 2.0 * problem.m * res.iterations + init_sync, "async_vector_equivalents": 0.0,
                "control_messages": 0, "eval_vectors": 0.0}
        vsec = float(times[-1])
    wall = time.perf_counter() - started
    last = res.checkpoints[-1]
    record = {
        "algo": algo,
        "seed": int(seed),
        "passes": float(res.passes),
        "virtual_seconds": float(vsec),
        "final_primal_gap": _num(last.primal_gap),
        "final_duality_gap": _num(last.duality_gap),
        "final_omega": _num(last.omega),
        "communication": comm,
        "wall_seconds": wall,
        "status": "ok",
    }
    return rows, record


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def write_trace(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(TRACE_COLUMNS)
        for r in rows:
            wr.writerow([repr(float(v)) for v in r])


def read_trace(path):
    with open(path, encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        return header, np.array([[float(v) for v in row] for row in rd])


def run_experiment(cfg, out_dir=None):
    """Run every (algorithm, seed) cell; write CSV traces and ``summary.json``.

    Returns the summary dictionary.  Cells that diverge are recorded with
    ``status = "diverged"`` and no trace file.
    """
    from .errors import DivergenceError

    cfg.validate()
    out_dir = cfg.out if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    problem = build_problem(cfg)
    reference = cached_oracle(cfg, problem)
    p_star = primal_value(problem, reference.w)
    runs = []
    for algo in cfg.algos:
        for seed in cfg.seeds:
            name = f"{algo}_seed{seed}.csv"
            try:
                rows, rec = run_cell(cfg, algo, seed, problem, reference)
            except DivergenceError as exc:
                runs.append({"algo": algo, "seed": int(seed), "status": "diverged", "message": str(exc)})
                continue
            write_trace(os.path.join(out_dir, name), rows)
            rec["trace"] = name
            runs.append(rec)
    try:
        d_star = dual_value(problem, reference.alpha)
    except NotImplementedError:
        d_star = None
    summary = {
        "config": {k: v for k, v in dataclasses.asdict(cfg).items()},
        "problem": {"N": problem.N, "d": problem.d, "m": problem.m, "n": problem.n},
        "oracle": {"primal": p_star, "dual": d_star},
        "columns": list(TRACE_COLUMNS),
        "runs": runs,
    }
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def summary_schema():
    """The JSON schema that ``summary.json`` follows."""
    return json.loads(resources.files("dscovr").joinpath(SCHEMA_NAME).read_text(encoding="utf-8"))


def summarize(out_dir):
    """Per-algorithm mean final gaps and communication over seeds."""
    with open(os.path.join(out_dir, "summary.json"), encoding="utf-8") as fh:
        summary = json.load(fh)
    table = {}
    for rec in summary["runs"]:
        t = table.setdefault(rec["algo"], {"runs": 0, "diverged": 0, "primal_gap": [], "duality_gap": [],
                                           "sync_vectors": [], "async_vector_equivalents": [], "passes": []})
        t["runs"] += 1
        if rec["status"] != "ok":
            t["diverged"] += 1
            continue
        for key, val in (("primal_gap", rec["final_primal_gap"]), ("duality_gap", rec["final_duality_gap"]),
                         ("passes", rec["passes"])):
            if val is not None:
                t[key].append(val)
        for key in ("sync_vectors", "async_vector_equivalents"):
            t[key].append(rec["communication"][key])
    out = {}
    for algo, t in table.items():
        out[algo] = {k: (float(np.mean(v)) if v else None) if isinstance(v, list) else v for k, v in t.items()}
    return out
