"""Monte Carlo engine, experiment configuration, and report emission.

Replications are allocated half to each hypothesis and every replication runs
on its own counter-derived substream, so reports are bit-identical for any
worker count.  Aggregation always sums in replication-index order.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from . import sampler as smp
from .models import (
    HypothesisPair,
    ModelKind,
    SimulateSource,
    bernoulli_pair,
    normal_mean_pair,
)
from .numeric import NEG_INF
from .testing import (
    CostSpec,
    RiskEstimate,
    TestFamily,
    TestSpec,
    aggregate_risk,
    design_test,
    first_stage_sizes,
    predicted_risk,
    run_trial,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RiskReport",
    "CSV_FIELDS",
    "parse_config",
    "load_config",
    "build_pair",
    "build_cost",
    "build_test",
    "simulate",
    "kstar_search",
    "table1",
    "design",
    "write_reports_csv",
]


class ConfigError(ValueError):
    """Malformed experiment configuration; message carries the line number."""


_CONFIG_KEYS = {
    "model.kind": str,
    "model.p0": float,
    "model.p1": float,
    "model.mu0": float,
    "model.mu1": float,
    "cost.log_d_inv": float,
    "cost.d_over_c": float,
    "prior.pi0": float,
    "loss.w0": float,
    "loss.w1": float,
    "sim.reps": int,
    "sim.seed": int,
    "sim.max_total_n": int,
    "test.family": str,
    "test.k": int,
}

_DEFAULTS = {
    "prior.pi0": 0.5,
    "loss.w0": 1.0,
    "loss.w1": 1.0,
    "sim.reps": 10_000,
    "sim.seed": 0,
    "sim.max_total_n": None,
    "test.k": None,
}


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def with_overrides(self, **kv) -> "ExperimentConfig":
        vals = dict(self.values)
        vals.update(kv)
        return ExperimentConfig(vals)


def parse_config(text: str, name: str = "<config>") -> ExperimentConfig:
    """Parse the line-oriented ``key = value`` format; unknown keys are errors."""
    values = dict(_DEFAULTS)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{name}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = (part.strip() for part in line.partition("="))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{name}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](val)
        except ValueError:
            raise ConfigError(
                f"{name}:{lineno}: cannot parse {val!r} as {_CONFIG_KEYS[key].__name__}"
            ) from None
    _validate(values, name)
    return ExperimentConfig(values)


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), name=str(path))


def _require(values: dict, keys: Iterable[str], name: str, why: str) -> None:
    missing = [k for k in keys if k not in values or values[k] is None]
    if missing:
        raise ConfigError(f"{name}: missing {missing} ({why})")


def _validate(values: dict, name: str) -> None:
    _require(values, ["model.kind", "cost.log_d_inv", "cost.d_over_c", "test.family"],
             name, "required keys")
    kind = values["model.kind"]
    if kind == "bernoulli":
        _require(values, ["model.p0", "model.p1"], name, "bernoulli model")
    elif kind == "normal_mean":
        _require(values, ["model.mu0", "model.mu1"], name, "normal-mean model")
    else:
        raise ConfigError(f"{name}: model.kind must be bernoulli or normal_mean")
    family = values["test.family"]
    if family not in ("auto", "delta_plus", "group"):
        raise ConfigError(f"{name}: test.family must be auto, delta_plus or group")
    if family == "group" and not values.get("test.k"):
        raise ConfigError(f"{name}: test.family=group needs test.k")
    reps = values["sim.reps"]
    if reps < 2 or reps % 2 != 0:
        raise ConfigError(f"{name}: sim.reps must be a positive even number, got {reps}")


def build_pair(config: ExperimentConfig) -> HypothesisPair:
    if config["model.kind"] == "bernoulli":
        return bernoulli_pair(config["model.p0"], config["model.p1"])
    return normal_mean_pair(config["model.mu0"], config["model.mu1"])


def build_cost(config: ExperimentConfig) -> CostSpec:
    return CostSpec.from_ratio(
        config["cost.log_d_inv"],
        config["cost.d_over_c"],
        pi0=config["prior.pi0"],
        w=(config["loss.w0"], config["loss.w1"]),
    )


def build_test(config: ExperimentConfig) -> TestSpec:
    return design_test(
        build_pair(config),
        build_cost(config),
        TestFamily(config["test.family"]),
        k=config["test.k"],
    )


CSV_FIELDS = [
    "test_id",
    "d_over_c",
    "reps",
    "EN",
    "EN_se",
    "EM",
    "EM_se",
    "err0",
    "err1",
    "risk_over_d",
    "second_order_over_d",
    "m_star",
    "r_tilde_over_d",
]


@dataclass(frozen=True)
class RiskReport:
    test_id: str
    d_over_c: float
    reps: int
    EN: float
    EN_se: float
    EM: float
    EM_se: float
    err0: float
    err1: float
    risk_over_d: float
    second_order_over_d: float | None = None
    m_star: int | None = None
    r_tilde_over_d: float | None = None
    risk: float = 0.0
    risk_se: float = 0.0

    def row(self) -> list:
        def fmt(v):
            return "" if v is None else v

        return [
            self.test_id,
            self.d_over_c,
            self.reps,
            self.EN,
            self.EN_se,
            self.EM,
            self.EM_se,
            self.err0,
            self.err1,
            self.risk_over_d,
            fmt(self.second_order_over_d),
            fmt(self.m_star),
            fmt(self.r_tilde_over_d),
        ]


def write_reports_csv(reports: Sequence[RiskReport], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for rep in reports:
        writer.writerow(rep.row())


# ---------------------------------------------------------------------------
# replication engines


def _group_threshold(pair: HypothesisPair, log_d_inv: float) -> int:
    # smallest integer lattice displacement whose log-likelihood magnitude
    # reaches the boundary under the same float comparison the trial uses
    step = abs(pair.llr_one)
    b = max(1, math.ceil(log_d_inv / step))
    while (b - 1) * step >= log_d_inv:
        b -= 1
    while b * step < log_d_inv:
        b += 1
    return b


def _run_group_symmetric(
    spec: TestSpec, truth: int, seed: int, index: int, cap: int
) -> tuple[int, int, int]:
    """One symmetric-Bernoulli group trial via whole-path scanning.

    Draws the same observation stream as :func:`seqstage.testing.run_trial`
    (the substream is consumed in identical chunk sizes), then finds the first
    stage boundary where the lattice walk has left the open band.
    """
    pair, cost, k = spec.pair, spec.cost, spec.k
    b = _group_threshold(pair, cost.log_d_inv)
    sgn = 1 if pair.llr_one > 0 else -1
    src = SimulateSource(pair, truth, seed, index)
    net = 0
    obs = 0
    max_stages = cap // k
    while True:
        stages_left = max_stages - obs // k
        if stages_left <= 0:
            raise smp.BudgetExceededError(
                f"{obs + k} observations would exceed the cap {cap}"
            )
        span = k * min(max(512 // k, 1), stages_left)
        chunk = src.take(span)
        path = net + np.cumsum(2 * chunk.astype(np.int64) - 1)
        at_ends = path[k - 1 :: k]
        hits = np.abs(at_ends) >= b
        if hits.any():
            j = int(np.argmax(hits))
            n_total = obs + (j + 1) * k
            d = 0 if sgn * at_ends[j] >= b else 1
            return n_total, n_total // k, d
        net = int(path[-1])
        obs += span


def _run_one(
    spec: TestSpec, truth: int, seed: int, index: int, cap: int
) -> tuple[int, int, int]:
    if (
        spec.family is TestFamily.GROUP
        and spec.pair.kind is ModelKind.BERNOULLI
        and spec.pair.symmetric
    ):
        return _run_group_symmetric(spec, truth, seed, index, cap)
    rec = run_trial(spec, SimulateSource(spec.pair, truth, seed, index), cap)
    return rec.N, rec.M, rec.D


def _default_cap(spec: TestSpec, override: int | None) -> int:
    if override is not None:
        return override
    return math.ceil(100.0 * spec.cost.log_d_inv / min(spec.pair.info))


def _run_block(
    spec: TestSpec, truth: int, seed: int, start: int, count: int, cap: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ns = np.empty(count, dtype=np.int64)
    ms = np.empty(count, dtype=np.int64)
    ds = np.empty(count, dtype=np.int64)
    for i in range(count):
        ns[i], ms[i], ds[i] = _run_one(spec, truth, seed, start + i, cap)
    return ns, ms, ds


def _run_block_task(args) -> tuple[int, np.ndarray, np.ndarray, np.ndarray]:
    config_values, truth, seed, start, count = args
    config = ExperimentConfig(config_values)
    spec = build_test(config)
    cap = _default_cap(spec, config["sim.max_total_n"])
    ns, ms, ds = _run_block(spec, truth, seed, start, count, cap)
    return start, ns, ms, ds


def _run_truth(
    config: ExperimentConfig,
    spec: TestSpec,
    truth: int,
    seed: int,
    start: int,
    count: int,
    workers: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cap = _default_cap(spec, config["sim.max_total_n"])
    if workers <= 1:
        return _run_block(spec, truth, seed, start, count, cap)
    blocks = max(1, min(4 * workers, count))
    edges = np.linspace(start, start + count, blocks + 1).astype(int)
    tasks = [
        (config.values, truth, seed, int(a), int(b - a))
        for a, b in zip(edges[:-1], edges[1:])
        if b > a
    ]
    ns = np.empty(count, dtype=np.int64)
    ms = np.empty(count, dtype=np.int64)
    ds = np.empty(count, dtype=np.int64)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for s, bn, bm, bd in pool.map(_run_block_task, tasks):
            o = s - start
            ns[o : o + bn.size] = bn
            ms[o : o + bm.size] = bm
            ds[o : o + bd.size] = bd
    return ns, ms, ds


def _report_from_arrays(
    spec: TestSpec,
    est: RiskEstimate,
    test_id: str,
    reps: int,
) -> RiskReport:
    m_val = None
    rt = None
    if spec.family is not TestFamily.GROUP:
        pred = predicted_risk(spec.pair, spec.cost)
        m_val = pred.m_star[0]
        rt = pred.r_tilde_over_d
    return RiskReport(
        test_id=test_id,
        d_over_c=spec.cost.d_over_c,
        reps=reps,
        EN=est.en,
        EN_se=est.en_se,
        EM=est.em,
        EM_se=est.em_se,
        err0=est.err0,
        err1=est.err1,
        risk_over_d=est.risk_over_d,
        m_star=m_val,
        r_tilde_over_d=rt,
        risk=est.risk,
        risk_se=est.risk_se,
    )


def _test_id(config: ExperimentConfig) -> str:
    fam = config["test.family"]
    if fam == "group":
        return f"group_k{config['test.k']}"
    return fam


def simulate(
    config: ExperimentConfig, workers: int = 1, k_override: int | None = None
) -> RiskReport:
    """Run the configured experiment: half the replications per hypothesis,
    mixture-aggregated with the priors.  Deterministic in (seed, reps)."""
    if k_override is not None:
        config = config.with_overrides(**{"test.k": k_override, "test.family": "group"})
    spec = build_test(config)
    reps = config["sim.reps"]
    seed = config["sim.seed"]
    half = reps // 2
    by_truth = tuple(
        _run_truth(config, spec, truth, seed, truth * half, half, workers)
        for truth in (0, 1)
    )
    est = aggregate_risk(by_truth, spec.cost)
    return _report_from_arrays(spec, est, _test_id(config), reps)


def kstar_search(
    config: ExperimentConfig,
    k_range: Sequence[int],
    workers: int = 1,
) -> tuple[int, list[RiskReport]]:
    """Exhaust the group stage size over a grid with common random numbers.

    Every k reuses the same per-replication substreams, hence the same
    observation streams, so the risk curve differences are not masked by
    sampling noise.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks or ks[0] < 1:
        raise ConfigError(f"k grid must be nonempty positive integers, got {k_range}")
    curve = [simulate(config, workers=workers, k_override=k) for k in ks]
    best = min(range(len(ks)), key=lambda i: curve[i].risk)
    return ks[best], curve


def _second_order(report: RiskReport, en_group1: float) -> RiskReport:
    rp = report.risk_over_d - en_group1 / report.d_over_c - 1.0
    return replace(report, second_order_over_d=rp)


TABLE1_CONFIG = {
    "model.kind": "bernoulli",
    "model.p0": 0.4,
    "model.p1": 0.6,
    "cost.log_d_inv": 10.0,
    "prior.pi0": 0.5,
    "loss.w0": 1.0,
    "loss.w1": 1.0,
    "sim.max_total_n": None,
    "test.k": None,
}


def table1(
    reps: int = 100_000,
    seed: int = 20254,
    d_over_c_values: Sequence[float] = (5.0, 10.0, 25.0),
    kstar_range: Sequence[int] | None = None,
    workers: int = 1,
) -> list[RiskReport]:
    """The binomial study: the adaptive test against group baselines.

    For each cost ratio, runs the adaptive test and the group tests at stage
    sizes 1, the adaptive test's rounded average stage size, its first stage,
    its rounded expected sample size, and the exhaustion optimum; attaches
    second-order risks measured against the fully-sequential baseline.
    """
    reports: list[RiskReport] = []
    for doc in d_over_c_values:
        base = ExperimentConfig(
            dict(
                TABLE1_CONFIG,
                **{
                    "cost.d_over_c": float(doc),
                    "sim.reps": int(reps),
                    "sim.seed": int(seed),
                    "test.family": "auto",
                },
            )
        )
        delta = simulate(base, workers=workers)
        spec = build_test(base)
        k_avg = max(1, round(delta.EN / delta.EM))
        k_first = min(first_stage_sizes(spec))
        k_en = max(1, round(delta.EN))
        grid = kstar_range
        if grid is None:
            grid = range(1, math.ceil(1.5 * delta.EN) + 1, 2)
        k_star, curve = kstar_search(base, grid, workers=workers)
        by_k = {r.test_id: r for r in curve}
        group_ks: list[int] = []
        for k in (1, k_avg, k_first, k_en):
            if k not in group_ks:
                group_ks.append(k)
        group_reports = []
        for k in group_ks:
            rep = by_k.get(f"group_k{k}")
            if rep is None:
                rep = simulate(base, workers=workers, k_override=k)
            group_reports.append(rep)
        en1 = group_reports[0].EN  # k = 1 is always first
        block = [_second_order(delta, en1)] + [
            _second_order(r, en1) for r in group_reports
        ]
        star = by_k[f"group_k{k_star}"]
        block.append(
            replace(_second_order(star, en1), test_id=f"group_kstar{k_star}")
        )
        reports.extend(block)
    return reports


@dataclass(frozen=True)
class DesignSummary:
    lines: list[str] = field(default_factory=list)

    def __str__(self) -> str:
        return "\n".join(self.lines)


def design(config: ExperimentConfig) -> DesignSummary:
    """Deterministic design preview: boundaries, drifts, stage budgets, the
    zero-noise stage schedule, the risk approximation and the error bound."""
    spec = build_test(config)
    pair, cost = spec.pair, spec.cost
    out = [
        f"family = {spec.family.value}",
        f"log d^-1 = {cost.log_d_inv:.6g}   d/c = {cost.d_over_c:.6g}   "
        f"error bound d = {cost.d:.6g}",
    ]
    if spec.family is TestFamily.GROUP:
        out.append(f"constant stage size k = {spec.k}")
        return DesignSummary(out)
    pred = predicted_risk(pair, cost)
    out.append(f"r_tilde/d = {pred.r_tilde_over_d:.4f}")
    for i in (0, 1):
        side = spec.sides[i]
        out.append(
            f"side {i}: a = {side.boundary:.6f}  mu = {side.mu:.6f}  "
            f"m* = {side.m}"
            + (
                f"  z* = {'-inf' if side.z is NEG_INF else format(side.z, '.6f')}"
                if spec.family is TestFamily.DELTA_PLUS
                else ""
            )
        )
        sched = _zero_noise_schedule(side)
        out.append(f"side {i} zero-noise schedule: {sched}")
    return DesignSummary(out)


def _zero_noise_schedule(side: smp.SamplerSpec) -> list[int]:
    import itertools

    res = smp.run_to_crossing(side, itertools.repeat(side.mu))
    return list(res.stage_sizes)
