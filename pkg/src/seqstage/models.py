"""Simple-hypothesis pairs and observation sources.

A :class:`HypothesisPair` bundles two densities with their per-hypothesis
information numbers and log-likelihood-ratio scales.  Two families are built
in: Bernoulli success probabilities and unit-variance normal means.  The
Bernoulli family is lattice-valued (its log-likelihood ratio takes exactly
two values), the normal family has a finite moment generating function.

Observation sources either simulate from one of the two hypotheses on a
counter-derived random substream, or replay a recorded file verbatim.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .numeric import DomainError

__all__ = [
    "ModelKind",
    "HypothesisPair",
    "bernoulli_pair",
    "normal_mean_pair",
    "llr_increment",
    "standardized_increment",
    "ObservationSource",
    "SimulateSource",
    "ReplaySource",
    "ReplayExhaustedError",
    "substream",
    "write_replay_file",
]


class ModelKind(Enum):
    BERNOULLI = "bernoulli"
    NORMAL_MEAN = "normal_mean"


class ReplayExhaustedError(RuntimeError):
    """A replay file ran out of observations before the trial finished."""


@dataclass(frozen=True)
class HypothesisPair:
    """Two simple densities f_0, f_1 with their separation constants.

    ``info`` holds the Kullback-Leibler numbers (I_0, I_1) and ``sigma`` the
    standard deviations of the single-observation log-likelihood ratio under
    each hypothesis.  For Bernoulli pairs ``llr_one``/``llr_zero`` cache
    log(p0/p1) and log((1-p0)/(1-p1)) so partial sums can be rebuilt exactly
    from integer counts.
    """

    kind: ModelKind
    params: tuple[float, float]
    info: tuple[float, float]
    sigma: tuple[float, float]
    llr_one: float = 0.0
    llr_zero: float = 0.0

    @property
    def symmetric(self) -> bool:
        return self.info[0] == self.info[1] and self.sigma[0] == self.sigma[1]

    def drift(self, i: int) -> float:
        """Mean of the standardized increment under hypothesis i."""
        return self.info[i] / self.sigma[i]


def bernoulli_pair(p0: float, p1: float) -> HypothesisPair:
    """Bernoulli(p0) versus Bernoulli(p1), both probabilities interior."""
    for name, p in (("p0", p0), ("p1", p1)):
        if not 0.0 < p < 1.0:
            raise DomainError(f"{name} must lie strictly inside (0, 1), got {p}")
    if p0 == p1:
        raise DomainError("the two hypotheses must be distinct")
    llr_one = math.log(p0 / p1)
    llr_zero = math.log((1.0 - p0) / (1.0 - p1))
    if p1 == 1.0 - p0:
        # exchangeable case: the two log-likelihood values are exact
        # negations, so force that at the bit level; partial sums then live
        # on the single-step lattice net * llr_one
        llr_zero = -llr_one
    i0 = p0 * llr_one + (1.0 - p0) * llr_zero
    i1 = -(p1 * llr_one + (1.0 - p1) * llr_zero)
    spread = math.log((p0 * (1.0 - p1)) / (p1 * (1.0 - p0)))
    s0 = math.sqrt(p0 * (1.0 - p0)) * abs(spread)
    s1 = math.sqrt(p1 * (1.0 - p1)) * abs(spread)
    if p1 == 1.0 - p0:
        i1 = i0
        s1 = s0
    return HypothesisPair(
        kind=ModelKind.BERNOULLI,
        params=(p0, p1),
        info=(i0, i1),
        sigma=(s0, s1),
        llr_one=llr_one,
        llr_zero=llr_zero,
    )


def normal_mean_pair(mu0: float, mu1: float) -> HypothesisPair:
    """N(mu0, 1) versus N(mu1, 1)."""
    if mu0 == mu1:
        raise DomainError("the two means must be distinct")
    gap = abs(mu1 - mu0)
    info = gap * gap / 2.0
    return HypothesisPair(
        kind=ModelKind.NORMAL_MEAN,
        params=(mu0, mu1),
        info=(info, info),
        sigma=(gap, gap),
    )


def llr_increment(pair: HypothesisPair, x: float) -> float:
    """log(f_0(x)/f_1(x)) for a single observation."""
    if pair.kind is ModelKind.BERNOULLI:
        if x == 1:
            return pair.llr_one
        if x == 0:
            return pair.llr_zero
        raise DomainError(f"Bernoulli observation must be 0 or 1, got {x}")
    mu0, mu1 = pair.params
    return (mu0 - mu1) * (x - 0.5 * (mu0 + mu1))


def standardized_increment(pair: HypothesisPair, i: int, x: float) -> float:
    """Unit-variance increment for the side-i crossing process.

    Under hypothesis i its mean is info_i/sigma_i > 0; side 1 sees the
    negated log-likelihood ratio.
    """
    if i not in (0, 1):
        raise DomainError(f"hypothesis index must be 0 or 1, got {i}")
    sign = 1.0 if i == 0 else -1.0
    return sign * llr_increment(pair, x) / pair.sigma[i]


def substream(master_seed: int, index: int) -> np.random.Generator:
    """Counter-derived substream: Philox keyed by hashing (seed, index).

    Deterministic for a given build of numpy regardless of how many other
    substreams exist or in what order they are used.
    """
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence((master_seed, index)))
    )


class ObservationSource:
    """Common surface: ``take(n)`` yields the next n observations."""

    position: int

    def take(self, n: int) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


class SimulateSource(ObservationSource):
    """Draw observations from hypothesis ``truth`` of a pair, in chunks."""

    def __init__(
        self,
        pair: HypothesisPair,
        truth: int,
        master_seed: int,
        replication: int,
        chunk: int = 512,
    ) -> None:
        if truth not in (0, 1):
            raise DomainError(f"truth must be 0 or 1, got {truth}")
        self.pair = pair
        self.truth = truth
        self.position = 0
        self._chunk = chunk
        self._rng = substream(master_seed, replication)
        self._buf = np.empty(0)

    def _draw(self, n: int) -> np.ndarray:
        if self.pair.kind is ModelKind.BERNOULLI:
            p = self.pair.params[self.truth]
            return (self._rng.random(n) < p).astype(np.float64)
        return self._rng.standard_normal(n) + self.pair.params[self.truth]

    def take(self, n: int) -> np.ndarray:
        while self._buf.size - self.position < n:
            grow = max(self._chunk, n)
            self._buf = np.concatenate((self._buf[self.position :], self._draw(grow)))
            self.position = 0
        out = self._buf[self.position : self.position + n]
        self.position += n
        return out


class ReplaySource(ObservationSource):
    """Replay a recorded observation file, exactly and at most once.

    Format: a header line ``# model=<kind> truth=<i>`` followed by one
    observation per line (single characters 0/1 for Bernoulli, decimal
    numbers for the normal model).
    """

    def __init__(self, path: str | Path) -> None:
        lines = Path(path).read_text().splitlines()
        if not lines or not lines[0].startswith("#"):
            raise DomainError(f"replay file {path} is missing its header line")
        fields = dict(
            part.split("=", 1) for part in lines[0].lstrip("# ").split() if "=" in part
        )
        try:
            self.kind = ModelKind(fields["model"])
            self.truth = int(fields["truth"])
        except (KeyError, ValueError) as exc:
            raise DomainError(f"bad replay header {lines[0]!r}") from exc
        body = [ln for ln in lines[1:] if ln.strip()]
        if self.kind is ModelKind.BERNOULLI:
            bad = [ln for ln in body if ln.strip() not in ("0", "1")]
            if bad:
                raise DomainError(f"non-binary replay line {bad[0]!r}")
            self._obs = np.array([float(ln) for ln in body])
        else:
            self._obs = np.array([float(ln) for ln in body])
        self.position = 0

    def take(self, n: int) -> np.ndarray:
        if self.position + n > self._obs.size:
            raise ReplayExhaustedError(
                f"replay needs {n} more observations, only "
                f"{self._obs.size - self.position} recorded"
            )
        out = self._obs[self.position : self.position + n]
        self.position += n
        return out


def write_replay_file(
    path: str | Path, kind: ModelKind, truth: int, observations: np.ndarray
) -> None:
    """Write observations in the replay format read by :class:`ReplaySource`."""
    with open(path, "w") as fh:
        fh.write(f"# model={kind.value} truth={truth}\n")
        if kind is ModelKind.BERNOULLI:
            fh.writelines(f"{int(x)}\n" for x in observations)
        else:
            fh.writelines(f"{x!r}\n" for x in observations)
