"""Normal-kernel special functions and closed-form stage-design quantities.

Everything here is a pure scalar function of its arguments.  These are the
building blocks the samplers and test designs are assembled from: the normal
CDF, Chernoff's psi+, the Mills-ratio hazard and its inverse, the stage-time
solver, the critical scale functions, the band constants kappa_m, the
second-order constant u_m, and the rescaling map f used by the recursive
sampler.
"""

from __future__ import annotations

import math

__all__ = [
    "NEG_INF",
    "DomainError",
    "std_normal_pdf",
    "std_normal_cdf",
    "psi_plus",
    "mills_hazard",
    "inverse_mills_hazard",
    "u_m",
    "stage_time",
    "stage_size",
    "critical_h",
    "kappa",
    "f_map",
    "f_inverse",
]


class DomainError(ValueError):
    """Argument outside the domain an operation is defined on."""


class _NegInf:
    """Tagged lower-end extended value for the quantile scale.

    A distinct sentinel rather than float('-inf') so that the conventions
    u_m(NEG_INF) = m and mills_hazard(NEG_INF) = 0 are exact identities and
    cannot be produced by accident from overflowed arithmetic.
    """

    __slots__ = ()

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return "NEG_INF"


NEG_INF = _NegInf()

Quantile = float | _NegInf

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def std_normal_pdf(z: float) -> float:
    """Standard normal density phi(z)."""
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


def std_normal_cdf(z: float) -> float:
    """Standard normal distribution function Phi(z).

    Evaluated as erfc(-z/sqrt(2))/2; the C library erfc keeps the absolute
    error well below 1e-12 over the whole double range, and the lower tail
    stays nonnegative instead of underflowing to a negative value.
    """
    return 0.5 * math.erfc(-z / _SQRT2)


def psi_plus(z: float) -> float:
    """Chernoff's psi+(z) = phi(z) - z*Phi(-z) = integral of Phi(-x) over [z, inf)."""
    return std_normal_pdf(z) - z * std_normal_cdf(-z)


def _hazard_cf(z: float) -> float:
    # Reciprocal Mills ratio by the classical continued fraction
    #   1/(z + 1/(z + 2/(z + 3/(...)))) = Phi(-z)/phi(z),
    # evaluated bottom-up.  For z >= 8 the truncation error at depth 64 is far
    # below double precision, while the direct ratio phi/Phi(-z) would lose
    # digits and eventually divide 0 by 0 near z ~ 38.
    tail = 0.0
    for k in range(64, 0, -1):
        tail = k / (z + tail)
    return z + tail


def mills_hazard(z: Quantile) -> float:
    """Hazard phi(z)/(1 - Phi(z)); the convention NEG_INF -> 0 is exact."""
    if z is NEG_INF:
        return 0.0
    if z > 8.0:
        return _hazard_cf(z)
    return std_normal_pdf(z) / std_normal_cdf(-z)


def inverse_mills_hazard(target: float) -> Quantile:
    """Unique z with mills_hazard(z) = target; target 0 maps to NEG_INF.

    The hazard is strictly increasing, so a bisection bracket followed by a
    Newton polish (hazard' = hazard*(hazard - z)) converges to ~1e-14
    relative.  Anything at or below the hazard at z = -40 (which is 0 in
    double precision) is indistinguishable from the limit and returns NEG_INF.
    """
    if target < 0.0:
        raise DomainError(f"hazard target must be nonnegative, got {target}")
    if target <= mills_hazard(-40.0):
        return NEG_INF
    lo = -40.0
    hi = max(40.0, target)  # hazard(z) > z for z > 0, so z* < target there
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if mills_hazard(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, abs(hi)):
            break
    z = 0.5 * (lo + hi)
    for _ in range(4):
        h = mills_hazard(z)
        slope = h * (h - z)
        if slope <= 0.0:
            break
        step = (h - target) / slope
        z -= step
        if abs(step) <= 1e-15 * max(1.0, abs(z)):
            break
    return z


def u_m(m: int, z: Quantile) -> float:
    """Second-order stage-count constant m + Phi(z) + psi+(z)*hazard(z).

    Strictly increasing in z from the limit m (at NEG_INF, exact by
    convention) to the limit m + 1.
    """
    if m < 1:
        raise DomainError(f"u_m needs m >= 1, got {m}")
    if z is NEG_INF:
        return float(m)
    return m + std_normal_cdf(z) + psi_plus(z) * mills_hazard(z)


def stage_time(x: float, z: float, mu: float) -> float:
    """Unique t > 0 solving (x - mu*t)/sqrt(t) = z, in closed form."""
    if x <= 0.0:
        raise DomainError(f"stage_time needs x > 0, got {x}")
    if mu <= 0.0:
        raise DomainError(f"stage_time needs mu > 0, got {mu}")
    return x / mu - (z * math.sqrt(4.0 * x * mu + z * z) - z * z) / (2.0 * mu * mu)


def stage_size(x: float, z: float, mu: float) -> int:
    """Ceiling of stage_time; always >= 1 since the time is positive."""
    n = math.ceil(stage_time(x, z, mu))
    return n if n >= 1 else 1


def critical_h(m: int, x: float) -> float:
    """Critical scale function x^(2^-m) * (log x)^(1/2 - 2^-m); h_0 is the identity.

    Only defined for x > 1: at smaller arguments the log factor is
    nonpositive and the band ordering the function encodes is meaningless,
    so that is a hard error rather than a continuation.
    """
    if m < 0:
        raise DomainError(f"critical_h needs m >= 0, got {m}")
    if x <= 1.0:
        raise DomainError(f"critical_h needs x > 1, got {x}")
    if m == 0:
        return x
    e = 0.5**m
    return x**e * math.log(x) ** (0.5 - e)


def kappa(m: int, mu: float) -> float:
    """Band-boundary constant kappa_m for drift mu; the m = 1 product is empty."""
    if m < 1:
        raise DomainError(f"kappa needs m >= 1, got {m}")
    if mu <= 0.0:
        raise DomainError(f"kappa needs mu > 0, got {mu}")
    prod = 1.0
    for i in range(1, m):
        prod *= (0.5 ** (m - 1 - i) - 0.5 ** (m - 1)) ** (0.5 ** (i + 1))
    return mu ** (-2.0 + 0.5**m) * prod


def f_map(x: float, mu: float) -> float:
    """Rescaling map (4/sqrt(mu)) * sqrt(x*log(x+1)); strictly increasing."""
    if x <= 0.0:
        raise DomainError(f"f_map needs x > 0, got {x}")
    if mu <= 0.0:
        raise DomainError(f"f_map needs mu > 0, got {mu}")
    return 4.0 / math.sqrt(mu) * math.sqrt(x * math.log1p(x))


def f_inverse(y: float, mu: float) -> float:
    """Inverse of f_map in x, by bracketed bisection to 1e-12 relative."""
    if y <= 0.0:
        raise DomainError(f"f_inverse needs y > 0, got {y}")
    if mu <= 0.0:
        raise DomainError(f"f_inverse needs mu > 0, got {mu}")
    lo = 0.0
    hi = 1.0
    while f_map(hi, mu) < y:
        hi *= 2.0
        if hi > 1e300:  # pragma: no cover - unreachable for finite y
            raise DomainError("f_inverse bracket overflow")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if f_map(mid, mu) < y:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return 0.5 * (lo + hi)
