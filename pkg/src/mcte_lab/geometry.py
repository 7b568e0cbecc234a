"""Ruppeiner geometry: metric, coupling one-form, stability determinant.

The metric is the negated entropy Hessian, g_ij = -d2S/dq^i dq^j.  The
negation happens in metric_at and nowhere else; getting the off-diagonal
sign wrong silently destroys the zeta_i T_i invariant downstream, which is
exactly what the sign-flip diagnostic in the flow module demonstrates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateIntensityError
from .surfaces import BETA_FLOOR, EntropySurface, as_coords, grad_S, hessian_S


@dataclass(frozen=True)
class MetricPoint:
    """Metric, intensities and channel temperatures at one point.

    T_i = 1/beta_i is the generalized temperature of channel i; for the
    granular surface T_0 is the compactivity chi and T_1 the (projected)
    angoricity A.
    """

    q: np.ndarray
    g: np.ndarray
    beta: np.ndarray
    T: np.ndarray

    @property
    def n(self) -> int:
        return self.q.size


@dataclass(frozen=True)
class OneFormValue:
    """dq-coefficients of omega_i; the i-th component is 0 by construction."""

    i: int
    components: np.ndarray


@dataclass(frozen=True)
class NormalProjection:
    """Scalar reduction of the stress block: unit normal (trivial for n=2),
    off-diagonal metric entry, and the angoricity projection."""

    n_hat: float
    g_Vsigma: float
    A: float


@dataclass(frozen=True)
class StabilityFlags:
    det_g: float
    is_stable: bool
    is_critical: bool
    first_failing_minor: int | None = None


def metric_at(surface: EntropySurface, q) -> MetricPoint:
    q = as_coords(q, surface.n)
    beta = grad_S(surface, q)  # enforces the intensity floor
    g = -hessian_S(surface, q)
    return MetricPoint(q=q, g=g, beta=beta, T=1.0 / beta)


def _check_channel(mp: MetricPoint, i: int) -> None:
    if not 0 <= i < mp.n:
        raise IndexError(f"channel {i} out of range for n={mp.n}")
    if abs(mp.beta[i]) < BETA_FLOOR:
        raise DegenerateIntensityError(
            f"|beta_{i}| = {abs(mp.beta[i]):.3e} below floor; "
            f"T_{i} undefined"
        )


def omega_at(mp: MetricPoint, i: int) -> OneFormValue:
    """Coupling one-form omega_i = sum_{j != i} (g_ii b_j - g_ij b_i)/b_i^2 dq^j."""
    _check_channel(mp, i)
    b = mp.beta
    comps = (mp.g[i, i] * b - mp.g[i] * b[i]) / b[i] ** 2
    comps[i] = 0.0
    return OneFormValue(i=i, components=comps)


def levelset_flow_rhs(mp: MetricPoint, i: int, j: int) -> float:
    """d beta_i / dq^j restricted to dS = 0: (g_ii b_j - g_ij b_i)/b_i."""
    if i == j:
        raise IndexError("flow rhs is defined for distinct channels i != j")
    _check_channel(mp, i)
    _check_channel(mp, j)
    b = mp.beta
    return float((mp.g[i, i] * b[j] - mp.g[i, j] * b[i]) / b[i])


def stability_det(mp: MetricPoint) -> float:
    """det g; >= 0 is thermodynamic stability, = 0 the critical state."""
    g = mp.g
    if mp.n == 2:
        return float(g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0])
    return float(np.linalg.det(g))


def zero_band(mp: MetricPoint, scale: float = 1e-10) -> float:
    """Width of the det g ~ 0 classification band (exact zeros are
    measure-zero in floating point)."""
    return scale * float(np.sum(mp.g * mp.g))


def stability_at(mp: MetricPoint, band_scale: float = 1e-10) -> StabilityFlags:
    """Classify a point: stable iff g is positive semi-definite.

    For n=2 the determinant decides (diagonal entries of the granular
    metric are positive in-domain); for larger n every leading principal
    minor must be nonnegative and the first failing one is reported.
    """
    det = stability_det(mp)
    band = zero_band(mp, band_scale)
    failing = None
    if mp.n == 2:
        stable = det >= -band
    else:
        stable = True
        for k in range(1, mp.n + 1):
            minor = float(np.linalg.det(mp.g[:k, :k]))
            if minor < -band:
                stable = False
                failing = k
                break
    return StabilityFlags(
        det_g=det,
        is_stable=bool(stable),
        is_critical=bool(abs(det) <= band),
        first_failing_minor=failing,
    )


def correction_estimate(mp: MetricPoint) -> float:
    """Fractional correction scale |g_01/g_00| * |T_0/T_1| (n=2)."""
    if mp.n != 2:
        raise IndexError("correction estimate is defined for n=2")
    _check_channel(mp, 0)
    _check_channel(mp, 1)
    if mp.g[0, 0] == 0.0:
        raise DegenerateIntensityError("g_00 = 0: correction scale undefined")
    return float(abs(mp.g[0, 1] / mp.g[0, 0]) * abs(mp.T[0] / mp.T[1]))


def normal_projection(mp: MetricPoint) -> NormalProjection:
    """The n=2 scalar stress reduction: n_hat is trivially 1."""
    if mp.n != 2:
        raise IndexError("scalar normal projection is defined for n=2")
    return NormalProjection(n_hat=1.0, g_Vsigma=float(mp.g[0, 1]),
                            A=float(mp.T[1]))
