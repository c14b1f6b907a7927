"""Multistage boundary-crossing samplers.

A sampler draws i.i.d. increments with positive drift in stages until the
running sum reaches a boundary ``a``.  Four families are implemented:

* ``BOLD``: one block of a given size, then constant blocks of the ceiling of
  its square root until crossing.
* ``DELTA_O``: a ladder of shrinking nonfinal stages driven by a cost-ratio
  function ``h`` (recomposed with the inverse rescaling map after every
  nonfinal stage), finished by bold sampling whose first block is tuned by
  ``h``.
* ``DELTA_PLUS``: the same nonfinal ladder, finished by one quantile-tuned
  stage and then bold sampling.
* ``GROUP``: constant stage size (the group-sequential baseline).

Specs are immutable and shareable; state objects are single-replication and
must not be shared between concurrent replications.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable, Iterator

import numpy as np

from .numeric import (
    NEG_INF,
    DomainError,
    Quantile,
    f_inverse,
    stage_size,
)

__all__ = [
    "Family",
    "Phase",
    "SamplerSpec",
    "SamplerState",
    "CrossingResult",
    "BudgetExceededError",
    "ConstantRatio",
    "bold",
    "delta_o",
    "delta_plus",
    "group",
    "initial_state",
    "next_stage_size",
    "advance",
    "run_to_crossing",
    "estimate_sampler_risk",
    "schedule_thresholds",
    "default_budget",
]

CostRatio = Callable[[float], float]


class ConstantRatio:
    """Cost-ratio function that ignores its argument.

    Composing a constant with the inverse rescaling map is a pointwise
    identity, so the sampler skips the (numerically inverted) composition for
    these — the schedule is unchanged and replications stay cheap.
    """

    __slots__ = ("value",)

    def __init__(self, value: float) -> None:
        self.value = float(value)

    def __call__(self, _x: float) -> float:
        return self.value

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return f"ConstantRatio({self.value})"


class Family(Enum):
    BOLD = "bold"
    DELTA_O = "delta_o"
    DELTA_PLUS = "delta_plus"
    GROUP = "group"


class Phase(Enum):
    STAGED = "staged"            # nonfinal ladder, group stages, or the final tuned stage
    BOLD_FIRST = "bold_first"    # about to take the seeded first bold block
    BOLD_REPEAT = "bold_repeat"  # constant square-root blocks after the first


class BudgetExceededError(RuntimeError):
    """Total sample size would pass the cap; the model is likely misconfigured
    (nonpositive drift), so this is an error rather than silent truncation."""


@dataclass(frozen=True)
class SamplerSpec:
    family: Family
    mu: float                    # drift of the (unit-variance) increments
    boundary: float              # distance a > 0 the running sum must reach
    n: int | None = None         # BOLD: first block size
    m: int | None = None         # DELTA_O / DELTA_PLUS: stage budget
    h: CostRatio | None = None   # DELTA_O: cost-ratio function of distance
    z: Quantile | None = None    # DELTA_PLUS: final-stage quantile
    k: int | None = None         # GROUP: constant stage size

    def __post_init__(self) -> None:
        if self.mu <= 0.0:
            raise DomainError(f"sampler drift must be positive, got {self.mu}")
        if self.boundary <= 0.0:
            raise DomainError(f"sampler boundary must be positive, got {self.boundary}")
        need = {
            Family.BOLD: self.n is not None and self.n >= 1,
            Family.DELTA_O: self.m is not None and self.m >= 1 and self.h is not None,
            Family.DELTA_PLUS: self.m is not None and self.m >= 1 and self.z is not None,
            Family.GROUP: self.k is not None and self.k >= 1,
        }[self.family]
        if not need:
            raise DomainError(f"incomplete spec for family {self.family}")


def bold(n: int, mu: float, boundary: float) -> SamplerSpec:
    return SamplerSpec(Family.BOLD, mu, boundary, n=n)


def delta_o(m: int, h: CostRatio, mu: float, boundary: float) -> SamplerSpec:
    return SamplerSpec(Family.DELTA_O, mu, boundary, m=m, h=h)


def delta_plus(m: int, z: Quantile, mu: float, boundary: float) -> SamplerSpec:
    return SamplerSpec(Family.DELTA_PLUS, mu, boundary, m=m, z=z)


def group(k: int, mu: float, boundary: float) -> SamplerSpec:
    return SamplerSpec(Family.GROUP, mu, boundary, k=k)


@dataclass(frozen=True)
class SamplerState:
    """Progress of one replication.

    ``total`` is the running sum of increments; the remaining distance is
    always recomputed as ``boundary - total`` rather than decremented, so no
    subtraction error accumulates over many stages.  ``depth`` counts the
    nonfinal ladder stages still ahead; ``repeat_size`` is fixed when the
    first bold block is taken.
    """

    total: float
    stage_index: int
    depth: int
    phase: Phase
    h_current: CostRatio | None
    repeat_size: int | None
    stage_sizes: tuple[int, ...]

    def remaining(self, spec: SamplerSpec) -> float:
        return spec.boundary - self.total


@dataclass(frozen=True)
class CrossingResult:
    total_n: int
    stages: int
    overshoot: float
    stage_sizes: tuple[int, ...]


def initial_state(spec: SamplerSpec) -> SamplerState:
    if spec.family is Family.BOLD:
        phase, depth = Phase.BOLD_FIRST, 0
    elif spec.family in (Family.DELTA_O, Family.DELTA_PLUS):
        phase, depth = Phase.STAGED, spec.m - 1
    else:
        phase, depth = Phase.STAGED, 0
    return SamplerState(
        total=0.0,
        stage_index=0,
        depth=depth,
        phase=phase,
        h_current=spec.h,
        repeat_size=None,
        stage_sizes=(),
    )


def _zeta(h: CostRatio, x: float) -> float:
    # Entry quantile for the bold finish of the ladder sampler: the gentler of
    # sqrt(h(x))/x^(1/4) and sqrt(1.5*log(x+1)), negated.
    return -min(math.sqrt(h(x)) / x**0.25, math.sqrt(1.5 * math.log1p(x)))


def next_stage_size(spec: SamplerSpec, state: SamplerState) -> int:
    """Size of the stage the sampler takes from this state.

    A deterministic pure function of (spec, state); ``advance`` re-derives it,
    so callers and the transition logic can never disagree about what was
    sampled.
    """
    x = state.remaining(spec)
    if x <= 0.0:
        raise DomainError("next_stage_size called after crossing")
    if spec.family is Family.GROUP:
        return spec.k
    if state.phase is Phase.BOLD_REPEAT:
        return state.repeat_size
    if spec.family is Family.BOLD:
        return spec.n
    if state.depth >= 1:
        z = math.sqrt((1.0 - 2.0 ** (-state.depth)) * math.log1p(x))
        return stage_size(x, z, spec.mu)
    if spec.family is Family.DELTA_O:
        # depth 0: the zeta-tuned block opens bold sampling
        return stage_size(x, _zeta(state.h_current, x), spec.mu)
    # DELTA_PLUS at depth 0
    if state.phase is Phase.STAGED:
        if spec.z is NEG_INF:
            raise DomainError("a NEG_INF quantile admits no finite final stage")
        return stage_size(x, spec.z, spec.mu)
    # bold seeded on the distance left after the tuned stage
    return stage_size(x, -math.sqrt(math.log1p(x)), spec.mu)


def advance(
    spec: SamplerSpec, state: SamplerState, stage_sum: float
) -> SamplerState | CrossingResult:
    """Fold one completed stage into the state; declare crossing at <= 0 left.

    Crossing is checked before any phase bookkeeping, so a nonfinal stage that
    already reaches the boundary ends the run with fewer stages than the
    budget.
    """
    n = next_stage_size(spec, state)
    total = state.total + stage_sum
    sizes = state.stage_sizes + (n,)
    remaining = spec.boundary - total
    if remaining <= 0.0:
        return CrossingResult(
            total_n=sum(sizes),
            stages=len(sizes),
            overshoot=-remaining,
            stage_sizes=sizes,
        )
    depth = state.depth
    phase = state.phase
    h_cur = state.h_current
    rep = state.repeat_size
    if spec.family is Family.BOLD:
        phase, rep = Phase.BOLD_REPEAT, rep if rep is not None else math.ceil(math.sqrt(spec.n))
    elif spec.family in (Family.DELTA_O, Family.DELTA_PLUS) and depth >= 1:
        depth -= 1
        if spec.family is Family.DELTA_O and not isinstance(h_cur, ConstantRatio):
            prev, mu = h_cur, spec.mu
            h_cur = lambda y, _prev=prev, _mu=mu: _prev(f_inverse(y, _mu))
    elif spec.family is Family.DELTA_O and phase is Phase.STAGED:
        phase, rep = Phase.BOLD_REPEAT, math.ceil(math.sqrt(n))
    elif spec.family is Family.DELTA_PLUS and phase is Phase.STAGED:
        phase = Phase.BOLD_FIRST
    elif phase is Phase.BOLD_FIRST:
        phase, rep = Phase.BOLD_REPEAT, math.ceil(math.sqrt(n))
    return replace(
        state,
        total=total,
        stage_index=state.stage_index + 1,
        depth=depth,
        phase=phase,
        h_current=h_cur,
        repeat_size=rep,
        stage_sizes=sizes,
    )


def default_budget(spec: SamplerSpec) -> int:
    return math.ceil(100.0 * spec.boundary / spec.mu)


def run_to_crossing(
    spec: SamplerSpec,
    increments: Iterable[float],
    max_total_n: int | None = None,
) -> CrossingResult:
    """Drive the sampler over an increment stream until it crosses."""
    cap = default_budget(spec) if max_total_n is None else max_total_n
    it: Iterator[float] = iter(increments)
    state = initial_state(spec)
    total_n = 0
    while True:
        n = next_stage_size(spec, state)
        if total_n + n > cap:
            raise BudgetExceededError(
                f"{total_n + n} observations would exceed the cap {cap}"
            )
        total_n += n
        stage_sum = 0.0
        for _ in range(n):
            try:
                stage_sum += next(it)
            except StopIteration:
                raise BudgetExceededError("increment stream exhausted before crossing")
        out = advance(spec, state, stage_sum)
        if isinstance(out, CrossingResult):
            return out
        state = out


def _run_gaussian(
    spec: SamplerSpec, rng: np.random.Generator, cap: int
) -> CrossingResult:
    # One replication on N(mu, 1) increments, drawing in chunks and reading
    # stage sums off a running cumulative sum.
    state = initial_state(spec)
    buf = rng.standard_normal(512) + spec.mu
    csum = np.concatenate(([0.0], np.cumsum(buf)))
    pos = 0
    while True:
        n = next_stage_size(spec, state)
        if pos + n > cap:
            raise BudgetExceededError(
                f"{pos + n} observations would exceed the cap {cap}"
            )
        while pos + n >= csum.size:
            grow = max(512, pos + n - csum.size + 1)
            extra = rng.standard_normal(grow) + spec.mu
            csum = np.concatenate((csum, csum[-1] + np.cumsum(extra)))
        stage_sum = float(csum[pos + n] - csum[pos])
        pos += n
        out = advance(spec, state, stage_sum)
        if isinstance(out, CrossingResult):
            return out
        state = out


def _substream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, index))))


def _fast_group_gaussian(
    spec: SamplerSpec, rng: np.random.Generator, cap: int
) -> tuple[int, int, float]:
    # constant stages need no state machine: scan the path at stage ends
    k, a = spec.k, spec.boundary
    pos = 0
    carry = 0.0
    while True:
        stages_left = cap // k - pos // k
        if stages_left <= 0:
            raise BudgetExceededError(f"{pos + k} observations would exceed the cap {cap}")
        span = k * min(max(512 // k, 1), stages_left)
        cs = carry + np.cumsum(rng.standard_normal(span) + spec.mu)
        ends = cs[k - 1 :: k]
        hits = ends >= a
        if hits.any():
            j = int(np.argmax(hits))
            n = pos + (j + 1) * k
            return n, n // k, float(ends[j] - a)
        pos += span
        carry = float(cs[-1])


def estimate_sampler_risk(
    spec: SamplerSpec,
    h_value: float,
    replications: int,
    rng_seed: int,
    max_total_n: int | None = None,
) -> tuple[float, float]:
    """Monte Carlo estimate of E(N - a/mu) + h_value*E(M) on N(mu,1) increments.

    Each replication runs on its own counter-derived substream, so results do
    not depend on scheduling.  Returns (estimate, standard error).
    """
    if replications < 1:
        raise DomainError("need at least one replication")
    cap = default_budget(spec) if max_total_n is None else max_total_n
    base = spec.boundary / spec.mu
    vals = np.empty(replications)
    for i in range(replications):
        rng = _substream(rng_seed, i)
        if spec.family is Family.GROUP:
            n, m, _ = _fast_group_gaussian(spec, rng, cap)
        else:
            res = _run_gaussian(spec, rng, cap)
            n, m = res.total_n, res.stages
        vals[i] = (n - base) + h_value * m
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(replications)) if replications > 1 else 0.0
    return est, se


def schedule_thresholds(
    spec: SamplerSpec, a: float, h: CostRatio | float
) -> list[float]:
    """Distances an efficient sampler should still have after each nonfinal stage.

    For stage k = 1..m-1 this is (1/mu)^(1-2^-k) times the k-th iterate of
    x -> sqrt(x*log(x/y^2)) started at a, with y frozen at h(a).  Diagnostic
    only: the iterate reads the published display as a distance scale, which
    is the only reading that keeps the argument of the log above 1.
    """
    if spec.family not in (Family.DELTA_O, Family.DELTA_PLUS):
        raise DomainError("schedule thresholds exist only for the ladder samplers")
    y = h(a) if callable(h) else float(h)
    out: list[float] = []
    x = a
    for k in range(1, spec.m):
        arg = x / (y * y)
        if arg <= 1.0:
            raise DomainError(f"threshold iterate {k} leaves the log domain (arg={arg})")
        x = math.sqrt(x * math.log(arg))
        out.append((1.0 / spec.mu) ** (1.0 - 2.0**-k) * x)
    return out
