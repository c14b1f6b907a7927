"""Sequential tests of two simple hypotheses built from the samplers.

Families:

* ``AUTO_DELTA_O``: the finite-sample construction — each hypothesis gets a
  ladder sampler with stage budget :func:`m_star` and constant cost ratio
  d/c run on its standardized log-likelihood process; the trial starts with
  the smaller of the two first stages, picks a side from the sign of the
  first-stage likelihood ratio, and continues that side's sampler.
* ``DELTA_PLUS``: the same skeleton with quantile-tuned samplers; the
  quantile solves the hazard equation at the evaluated (finite) band ratio.
* ``GROUP``: constant stage size k, same stopping rule.

All families stop, checked at the end of every stage, as soon as the
log-likelihood ratio leaves (-log(1/d), +log(1/d)); the decision is the side
of the exit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from . import sampler as smp
from .models import HypothesisPair, ModelKind, ObservationSource
from .numeric import (
    NEG_INF,
    DomainError,
    Quantile,
    critical_h,
    inverse_mills_hazard,
    kappa,
)

__all__ = [
    "TestFamily",
    "CostSpec",
    "TestSpec",
    "TrialRecord",
    "RiskEstimate",
    "PredictedRisk",
    "CapReachedError",
    "m_star",
    "power_one_spec",
    "design_test",
    "first_stage_sizes",
    "run_trial",
    "select_side",
    "integrated_risk",
    "aggregate_risk",
    "second_order_risk",
    "predicted_risk",
]

M_STAR_CAP = 64


class TestFamily(Enum):
    __test__ = False  # the Test prefix is domain language, not a test suite

    AUTO_DELTA_O = "auto"
    DELTA_PLUS = "delta_plus"
    GROUP = "group"


class CapReachedError(RuntimeError):
    """No stage budget up to the cap qualifies; d/c is effectively zero."""


@dataclass(frozen=True)
class CostSpec:
    """Sampling cost c per observation, d per stage, priors and losses.

    d doubles as the likelihood boundary scale: the trial stops once the
    likelihood ratio leaves (d, 1/d).
    """

    c: float
    d: float
    pi: tuple[float, float] = (0.5, 0.5)
    w: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self) -> None:
        if not 0.0 < self.c < 1.0:
            raise DomainError(f"need 0 < c < 1, got c={self.c}")
        if not 0.0 < self.d < 1.0:
            raise DomainError(f"need 0 < d < 1, got d={self.d}")
        if min(self.pi) < 0.0 or abs(self.pi[0] + self.pi[1] - 1.0) > 1e-12:
            raise DomainError(f"priors must be nonnegative and sum to 1, got {self.pi}")
        if min(self.w) <= 0.0:
            raise DomainError(f"losses must be positive, got {self.w}")

    @property
    def d_over_c(self) -> float:
        return self.d / self.c

    @property
    def log_d_inv(self) -> float:
        return -math.log(self.d)

    @classmethod
    def from_ratio(
        cls,
        log_d_inv: float,
        d_over_c: float,
        pi0: float = 0.5,
        w: tuple[float, float] = (1.0, 1.0),
    ) -> "CostSpec":
        if log_d_inv <= 0.0:
            raise DomainError(f"log d^-1 must be positive, got {log_d_inv}")
        if d_over_c <= 0.0:
            raise DomainError(f"d/c must be positive, got {d_over_c}")
        d = math.exp(-log_d_inv)
        return cls(c=d / d_over_c, d=d, pi=(pi0, 1.0 - pi0), w=w)


def m_star(pair: HypothesisPair, i: int, cost: CostSpec) -> int:
    """Stage budget: first m at which the marginal gain of allowing one more
    stage, 2*(kappa_m*h_m(a) - kappa_{m+1}*h_{m+1}(a)) at the side-i boundary
    a, drops to the per-stage cost ratio d/c.
    """
    mu = pair.drift(i)
    a = cost.log_d_inv / pair.sigma[i]
    threshold = cost.d_over_c / 2.0
    for m in range(1, M_STAR_CAP + 1):
        gain = kappa(m, mu) * critical_h(m, a) - kappa(m + 1, mu) * critical_h(m + 1, a)
        if gain <= threshold:
            return m
    raise CapReachedError(
        f"no stage budget up to {M_STAR_CAP} qualifies (d/c={cost.d_over_c:g})"
    )


def _plus_quantile(pair: HypothesisPair, i: int, cost: CostSpec, m: int) -> Quantile:
    # Boundary argument of the critical function in the hazard equation: the
    # full boundary normally; for the switched side of an asymmetric pair only
    # the fraction of the boundary that side still has to cover.
    i0, i1 = pair.info
    if i == 0 and i0 != i1:
        if not i0 < i1:
            raise DomainError(
                "the asymmetric quantile path requires the side-0 information "
                f"number to be the smaller one (I0={i0:g}, I1={i1:g})"
            )
        arg = (1.0 - i0 / i1) * cost.log_d_inv / pair.sigma[0]
        if arg <= 1.0:
            raise DomainError(
                "the switched-side boundary fraction "
                f"(1 - I0/I1)*log(1/d)/sigma0 = {arg:.4g} is inside the "
                "critical function's domain edge; the information numbers "
                "are too close for this quantile design at this boundary"
            )
    else:
        arg = cost.log_d_inv / pair.sigma[i]
    ratio = kappa(m, pair.drift(i)) * critical_h(m, arg) / cost.d_over_c
    return inverse_mills_hazard(ratio)


def power_one_spec(
    pair: HypothesisPair, i: int, cost: CostSpec, family: TestFamily
) -> smp.SamplerSpec:
    """Sampler that rejects hypothesis 1-i, run on the side-i standardized
    log-likelihood process with boundary log(1/d)/sigma_i."""
    if family is TestFamily.GROUP:
        raise DomainError("the group family is not built from power-one samplers")
    mu = pair.drift(i)
    a = cost.log_d_inv / pair.sigma[i]
    m = m_star(pair, i, cost)
    if family is TestFamily.AUTO_DELTA_O:
        return smp.delta_o(m, smp.ConstantRatio(cost.d_over_c), mu, a)
    return smp.delta_plus(m, _plus_quantile(pair, i, cost, m), mu, a)


@dataclass(frozen=True)
class TestSpec:
    __test__ = False

    pair: HypothesisPair
    cost: CostSpec
    family: TestFamily
    k: int | None = None
    sides: tuple[smp.SamplerSpec, smp.SamplerSpec] | None = None

    @property
    def boundaries(self) -> tuple[float, float]:
        L = self.cost.log_d_inv
        return (L / self.pair.sigma[0], L / self.pair.sigma[1])


def design_test(
    pair: HypothesisPair,
    cost: CostSpec,
    family: TestFamily,
    k: int | None = None,
) -> TestSpec:
    if family is TestFamily.GROUP:
        if k is None or k < 1:
            raise DomainError(f"the group family needs a stage size k >= 1, got {k}")
        return TestSpec(pair, cost, family, k=k)
    sides = (
        power_one_spec(pair, 0, cost, family),
        power_one_spec(pair, 1, cost, family),
    )
    return TestSpec(pair, cost, family, sides=sides)


def first_stage_sizes(spec: TestSpec) -> tuple[int, int]:
    """First stage each side's sampler would take from its full boundary."""
    if spec.family is TestFamily.GROUP:
        return (spec.k, spec.k)
    return tuple(
        smp.next_stage_size(s, smp.initial_state(s)) for s in spec.sides
    )


@dataclass(frozen=True)
class TrialRecord:
    N: int
    M: int
    D: int
    terminal_llr: float
    stage_sizes: tuple[int, ...]
    truth: int
    side: int | None = None  # sampler continued after stage 1; None if never selected


class _LlrTracker:
    """Running log-likelihood ratio rebuilt from totals, never accumulated.

    Bernoulli sums are integers times the two per-value constants, so every
    partial sum is exact on the lattice; normal sums are rebuilt from one
    running observation total.
    """

    def __init__(self, pair: HypothesisPair) -> None:
        self.pair = pair
        self.ones = 0
        self.zeros = 0
        self.n = 0
        self.sum_x = 0.0

    def add_stage(self, obs: np.ndarray) -> None:
        self.n += obs.size
        if self.pair.kind is ModelKind.BERNOULLI:
            ones = int(obs.sum())
            self.ones += ones
            self.zeros += obs.size - ones
        else:
            self.sum_x += float(obs.sum())

    @property
    def llr(self) -> float:
        if self.pair.kind is ModelKind.BERNOULLI:
            if self.pair.symmetric:
                # one rounding: the sum is an exact lattice multiple
                return (self.ones - self.zeros) * self.pair.llr_one
            return self.ones * self.pair.llr_one + self.zeros * self.pair.llr_zero
        mu0, mu1 = self.pair.params
        return (mu0 - mu1) * (self.sum_x - self.n * 0.5 * (mu0 + mu1))


def _state_after_first_stage(
    side: smp.SamplerSpec, n1: int, total: float
) -> smp.SamplerState:
    # The consumed common first stage counts as the side sampler's stage 1,
    # whatever its own prescription was; the recursion resumes at stage 2.
    if side.m >= 2:
        depth, phase, rep = side.m - 2, smp.Phase.STAGED, None
        h_cur = side.h
        if side.family is smp.Family.DELTA_O and not isinstance(h_cur, smp.ConstantRatio):
            prev, mu = h_cur, side.mu
            h_cur = lambda y, _prev=prev, _mu=mu: _prev(smp.f_inverse(y, _mu))
    elif side.family is smp.Family.DELTA_O:
        depth, phase, rep = 0, smp.Phase.BOLD_REPEAT, math.ceil(math.sqrt(n1))
        h_cur = side.h
    else:
        depth, phase, rep = 0, smp.Phase.BOLD_FIRST, None
        h_cur = None
    return smp.SamplerState(
        total=total,
        stage_index=1,
        depth=depth,
        phase=phase,
        h_current=h_cur,
        repeat_size=rep,
        stage_sizes=(n1,),
    )


def _decide(llr: float, log_d_inv: float) -> int | None:
    if llr >= log_d_inv:
        return 0
    if llr <= -log_d_inv:
        return 1
    return None


def select_side(family: TestFamily, first_stage_llr: float) -> int:
    """Side whose sampler continues after the common first stage.

    The automatic family sends an exactly-even likelihood ratio to side 1,
    the quantile family to side 0 (the tie is reachable on a lattice).
    """
    if family is TestFamily.AUTO_DELTA_O:
        return 0 if first_stage_llr > 0.0 else 1
    return 0 if first_stage_llr >= 0.0 else 1


def run_trial(
    spec: TestSpec,
    source: ObservationSource,
    max_total_n: int | None = None,
) -> TrialRecord:
    """Run one replication to decision.

    The two-sided stopping rule is checked at the end of every stage,
    including bold blocks, so the trial may stop on the boundary opposite to
    the sampler currently in control.
    """
    pair, cost = spec.pair, spec.cost
    L = cost.log_d_inv
    cap = max_total_n
    if cap is None:
        cap = math.ceil(100.0 * L / min(pair.info))
    track = _LlrTracker(pair)
    sizes: list[int] = []

    def consume(n: int) -> None:
        if track.n + n > cap:
            raise smp.BudgetExceededError(
                f"{track.n + n} observations would exceed the cap {cap}"
            )
        track.add_stage(source.take(n))
        sizes.append(n)

    if spec.family is TestFamily.GROUP:
        while True:
            consume(spec.k)
            d = _decide(track.llr, L)
            if d is not None:
                return TrialRecord(track.n, len(sizes), d, track.llr, tuple(sizes), source.truth)

    n1 = min(first_stage_sizes(spec))
    consume(n1)
    d = _decide(track.llr, L)
    if d is not None:
        return TrialRecord(track.n, 1, d, track.llr, tuple(sizes), source.truth)

    side_idx = select_side(spec.family, track.llr)
    side = spec.sides[side_idx]
    sign = 1.0 if side_idx == 0 else -1.0

    def y_total() -> float:
        return sign * track.llr / pair.sigma[side_idx]

    state = _state_after_first_stage(side, n1, y_total())
    while True:
        n = smp.next_stage_size(side, state)
        consume(n)
        d = _decide(track.llr, L)
        if d is not None:
            return TrialRecord(
                track.n, len(sizes), d, track.llr, tuple(sizes), source.truth, side_idx
            )
        # advance with a zero sum cannot cross; it only does the phase and
        # depth bookkeeping, after which the exact count-based total is put in
        stepped = smp.advance(side, state, 0.0)
        state = replace(stepped, total=y_total())


@dataclass(frozen=True)
class RiskEstimate:
    en: float
    en_se: float
    em: float
    em_se: float
    err0: float
    err0_se: float
    err1: float
    err1_se: float
    risk: float
    risk_se: float
    risk_over_d: float
    reps: tuple[int, int]


def aggregate_risk(
    by_truth: tuple[
        tuple[np.ndarray, np.ndarray, np.ndarray],
        tuple[np.ndarray, np.ndarray, np.ndarray],
    ],
    cost: CostSpec,
) -> RiskEstimate:
    """Mixture risk from per-truth (N, M, D) arrays, with standard errors.

    Mixture weights are the priors; the error rate under truth i is the
    frequency of D = 1-i.  Standard errors combine the per-truth sampling
    variances with squared prior weights.
    """

    def moments(v: np.ndarray) -> tuple[float, float]:
        m = float(v.mean())
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
        return m, se

    en = em = risk = 0.0
    en_var = em_var = risk_var = 0.0
    errs: list[tuple[float, float]] = []
    reps: list[int] = []
    for i in (0, 1):
        n_arr, m_arr, d_arr = by_truth[i]
        reps.append(n_arr.size)
        pi = cost.pi[i]
        wrong = (d_arr != i).astype(np.float64)
        en_i, en_se_i = moments(n_arr.astype(np.float64))
        em_i, em_se_i = moments(m_arr.astype(np.float64))
        err_i, err_se_i = moments(wrong)
        cost_i, cost_se_i = moments(
            cost.c * n_arr + cost.d * m_arr + cost.w[i] * wrong
        )
        en += pi * en_i
        em += pi * em_i
        risk += pi * cost_i
        en_var += (pi * en_se_i) ** 2
        em_var += (pi * em_se_i) ** 2
        risk_var += (pi * cost_se_i) ** 2
        errs.append((err_i, err_se_i))
    return RiskEstimate(
        en=en,
        en_se=math.sqrt(en_var),
        em=em,
        em_se=math.sqrt(em_var),
        err0=errs[0][0],
        err0_se=errs[0][1],
        err1=errs[1][0],
        err1_se=errs[1][1],
        risk=risk,
        risk_se=math.sqrt(risk_var),
        risk_over_d=risk / cost.d,
        reps=(reps[0], reps[1]),
    )


def integrated_risk(
    records_by_truth: tuple[Sequence[TrialRecord], Sequence[TrialRecord]],
    cost: CostSpec,
) -> RiskEstimate:
    """Mixture risk estimate from per-hypothesis trial records."""
    packed = []
    for i in (0, 1):
        recs = records_by_truth[i]
        if not recs:
            raise DomainError(f"need at least one record under truth {i}")
        packed.append(
            (
                np.array([r.N for r in recs], dtype=np.float64),
                np.array([r.M for r in recs], dtype=np.float64),
                np.array([r.D for r in recs], dtype=np.int64),
            )
        )
    return aggregate_risk((packed[0], packed[1]), cost)


def second_order_risk(
    report: RiskEstimate | float, baseline_en_group1: float, cost: CostSpec
) -> float:
    """Risk net of the unavoidable fully-sequential cost c*EN(1) + d."""
    r = report.risk if isinstance(report, RiskEstimate) else float(report)
    return r - cost.c * baseline_en_group1 - cost.d


@dataclass(frozen=True)
class PredictedRisk:
    m_star: tuple[int, int]
    r_tilde_over_d: float


def predicted_risk(pair: HypothesisPair, cost: CostSpec) -> PredictedRisk:
    """Closed-form stage budgets and the risk approximation they imply.

    Per hypothesis: (c/d) * log(1/d) / I_i + m_i, mixed over the priors; for
    a symmetric pair both terms coincide.
    """
    ms = (m_star(pair, 0, cost), m_star(pair, 1, cost))
    L = cost.log_d_inv
    r = sum(
        cost.pi[i] * (L / (cost.d_over_c * pair.info[i]) + ms[i]) for i in (0, 1)
    )
    return PredictedRisk(m_star=ms, r_tilde_over_d=r)
