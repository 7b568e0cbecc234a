"""Entropy surfaces and their first two derivatives.

Everything downstream (metric, one-form, level-set flow) consumes a surface
only through eval_S / grad_S / hessian_S, so a surface is: a domain test, a
scalar S(q), and optionally closed-form derivatives.  Three kinds are
provided:

* ToyGranularSurface: the granular model
      S(V, sigma) = a ln(V - V_J) + b ln(sigma_max - sigma) - c sigma/(V - V_J)
  with hand-coded gradient and Hessian.  c controls the volume-stress
  coupling; c = 0 is the decoupled limit.  Channel 0 is V, channel 1 is
  the scalar normal stress projection sigma.
* QuadraticDiagonalSurface: S = -1/2 sum k_i (q_i - q*_i)^2, the
  constant-metric control surface used by the classical-limit and
  fluctuation tests.
* TabulatedSurface: bicubic interpolation of a gridded data file (ingestion
  path for particle-simulation output); derivatives always come from
  central differences of the interpolant.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import (
    ConfigError,
    DegenerateIntensityError,
    DomainError,
    NonFiniteError,
    SymmetryViolationError,
)

# Intensities below this magnitude make T_i = 1/beta_i numerically
# meaningless; every consumer of grad_S shares this floor.
BETA_FLOOR = 1e-12

# Central-difference defaults.  First differences balance truncation vs
# rounding near h ~ eps^(1/3); second differences carry an eps/h^2 rounding
# term and need a wider stencil, h ~ eps^(1/4), hence the separate floor.
GRAD_STEP_FLOOR = 1e-5
HESS_STEP_FLOOR = 2e-4
STEP_REL = 1e-7

# h-vs-2h cross-stencil disagreement beyond this flags a bad step size.
SYMMETRY_RTOL = 1e-3

_GRID_UNIFORMITY_RTOL = 1e-9


def as_coords(q, n: int | None = None) -> np.ndarray:
    """Validate and return a coordinate vector as a float array."""
    arr = np.atleast_1d(np.asarray(q, dtype=float))
    if arr.ndim != 1 or arr.size < 2:
        raise DomainError(
            f"need a vector of >= 2 channels, got shape {arr.shape}"
        )
    if n is not None and arr.size != n:
        raise DomainError(f"expected {n} channels, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"non-finite coordinates: {arr!r}")
    return arr


def default_grad_steps(q: np.ndarray) -> np.ndarray:
    return np.maximum(GRAD_STEP_FLOOR, STEP_REL * np.abs(q))


def default_hess_steps(q: np.ndarray) -> np.ndarray:
    return np.maximum(HESS_STEP_FLOOR, STEP_REL * np.abs(q))


@dataclass(frozen=True)
class ToyGranularParams:
    """Parameters of the granular toy surface.

    Defaults put the quoted operating points V0 = 0.78, 0.80 and the
    near-jamming offset V0 - V_J = 0.04 inside the domain; c is the
    coupling knob and defaults to the decoupled limit.
    """

    a: float = 1.0
    b: float = 1.0
    c: float = 0.0
    V_J: float = 0.75
    sigma_max: float = 1.0

    def __post_init__(self):
        if not (self.a > 0.0 and self.b > 0.0):
            raise DomainError("a and b must be > 0 (log-concavity)")
        if self.c < 0.0:
            raise DomainError("coupling c must be >= 0")
        if not (self.sigma_max > 0.0):
            raise DomainError("sigma_max must be > 0")
        for name in ("a", "b", "c", "V_J", "sigma_max"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"non-finite parameter {name}")


class EntropySurface:
    """Base class.  Subclasses define the domain, S, and optionally
    closed-form derivatives; derivative dispatch lives in grad_S /
    hessian_S below."""

    n = 2
    kind = "abstract"
    has_analytic = False

    def __init__(self, derivative_mode: str = "central-fd", fd_steps=None):
        if derivative_mode not in ("analytic", "central-fd"):
            raise ConfigError(f"unknown derivative_mode {derivative_mode!r}")
        if derivative_mode == "analytic" and not self.has_analytic:
            raise ConfigError(
                f"{self.kind} surface has no closed-form derivatives"
            )
        self.derivative_mode = derivative_mode
        if fd_steps is not None:
            fd_steps = tuple(float(h) for h in fd_steps)
            if len(fd_steps) != self.n or any(h <= 0 for h in fd_steps):
                raise ConfigError("fd_steps must be n positive step sizes")
        self.fd_steps = fd_steps

    def in_domain(self, q: np.ndarray) -> bool:
        raise NotImplementedError

    def S_raw(self, q: np.ndarray) -> float:
        """S(q) with no validation; callers guarantee q is in-domain."""
        raise NotImplementedError

    def grad_closed(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian_closed(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def scalar_S(self, v: float, s: float) -> float:
        """Fast scalar path for samplers: S(v, s), -inf outside the domain."""
        q = np.array([v, s])
        if not self.in_domain(q):
            return -math.inf
        return float(self.S_raw(q))


class ToyGranularSurface(EntropySurface):
    kind = "toy-granular"
    has_analytic = True

    def __init__(self, params: ToyGranularParams | None = None,
                 derivative_mode: str = "analytic", fd_steps=None):
        self.params = params if params is not None else ToyGranularParams()
        super().__init__(derivative_mode, fd_steps)

    def in_domain(self, q):
        p = self.params
        return bool(q[0] > p.V_J and 0.0 <= q[1] < p.sigma_max)

    def S_raw(self, q):
        p = self.params
        x = q[0] - p.V_J
        return p.a * math.log(x) + p.b * math.log(p.sigma_max - q[1]) \
            - p.c * q[1] / x

    def scalar_S(self, v, s):
        p = self.params
        x = v - p.V_J
        if x <= 0.0 or s < 0.0 or s >= p.sigma_max:
            return -math.inf
        return p.a * math.log(x) + p.b * math.log(p.sigma_max - s) - p.c * s / x

    def grad_closed(self, q):
        p = self.params
        x = q[0] - p.V_J
        return np.array([
            p.a / x + p.c * q[1] / x**2,
            -p.b / (p.sigma_max - q[1]) - p.c / x,
        ])

    def hessian_closed(self, q):
        p = self.params
        x = q[0] - p.V_J
        h_vv = -p.a / x**2 - 2.0 * p.c * q[1] / x**3
        h_vs = p.c / x**2
        h_ss = -p.b / (p.sigma_max - q[1]) ** 2
        return np.array([[h_vv, h_vs], [h_vs, h_ss]])


class QuadraticDiagonalSurface(EntropySurface):
    """S = s0 - 1/2 sum k_i (q_i - q*_i)^2; constant metric diag(k)."""

    kind = "quadratic-diagonal"
    has_analytic = True

    def __init__(self, k=(1.0, 1.0), q_star=(0.0, 0.0), s0: float = 0.0,
                 derivative_mode: str = "analytic", fd_steps=None):
        self.k = as_coords(k)
        self.q_star = as_coords(q_star, self.k.size)
        if not np.all(self.k > 0.0):
            raise DomainError("curvatures k_i must be > 0")
        self.s0 = float(s0)
        self.n = self.k.size
        super().__init__(derivative_mode, fd_steps)

    def in_domain(self, q):
        return bool(np.all(np.isfinite(q)))

    def S_raw(self, q):
        d = q - self.q_star
        return self.s0 - 0.5 * float(self.k @ (d * d))

    def scalar_S(self, v, s):
        dv = v - self.q_star[0]
        ds = s - self.q_star[1]
        return self.s0 - 0.5 * (self.k[0] * dv * dv + self.k[1] * ds * ds)

    def grad_closed(self, q):
        return -self.k * (q - self.q_star)

    def hessian_closed(self, q):
        return np.diag(-self.k)


class TabulatedSurface(EntropySurface):
    """Bicubic interpolant of S on a uniform rectangular grid.

    Derivatives always come from central differences of the interpolant
    (no closed form exists for measured data).
    """

    kind = "external-tabulated"
    has_analytic = False

    def __init__(self, q0_axis, q1_axis, S_grid, fd_steps=None):
        self.q0_axis = np.asarray(q0_axis, dtype=float)
        self.q1_axis = np.asarray(q1_axis, dtype=float)
        grid = np.asarray(S_grid, dtype=float)
        for name, ax in (("q0", self.q0_axis), ("q1", self.q1_axis)):
            if ax.size < 4:
                raise ConfigError(f"{name} axis needs >= 4 points for bicubic")
            _check_uniform(name, ax)
        if grid.shape != (self.q0_axis.size, self.q1_axis.size):
            raise ConfigError(
                f"grid shape {grid.shape} does not match axes "
                f"({self.q0_axis.size}, {self.q1_axis.size})"
            )
        if not np.all(np.isfinite(grid)):
            raise ConfigError("tabulated S contains non-finite entries")
        self.S_grid = grid
        self._spline = RectBivariateSpline(
            self.q0_axis, self.q1_axis, grid, kx=3, ky=3
        )
        super().__init__("central-fd", fd_steps)

    @classmethod
    def from_csv(cls, path, fd_steps=None) -> "TabulatedSurface":
        """Load from CSV with header q0,q1,S, row-major in q0."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["q0", "q1", "S"]:
                raise ConfigError(
                    f"expected header q0,q1,S in {path}, got {header}"
                )
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 3:
                    raise ConfigError(f"{path}:{lineno}: expected 3 columns")
                try:
                    rows.append(tuple(float(v) for v in row))
                except ValueError as exc:
                    raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        if not rows:
            raise ConfigError(f"{path}: no data rows")
        q1_axis = []
        for _, q1, _ in rows:
            if q1 in q1_axis:
                break
            q1_axis.append(q1)
        n1 = len(q1_axis)
        if n1 == 0 or len(rows) % n1 != 0:
            raise ConfigError(f"{path}: rows do not form a rectangular grid")
        n0 = len(rows) // n1
        q0_axis = [rows[i * n1][0] for i in range(n0)]
        for i in range(n0):
            for j in range(n1):
                r = rows[i * n1 + j]
                if r[0] != q0_axis[i] or r[1] != q1_axis[j]:
                    raise ConfigError(
                        f"{path}: grid not row-major in q0 at data row "
                        f"{i * n1 + j + 1}"
                    )
        S = np.array([r[2] for r in rows]).reshape(n0, n1)
        return cls(q0_axis, q1_axis, S, fd_steps=fd_steps)

    def in_domain(self, q):
        return bool(
            self.q0_axis[0] <= q[0] <= self.q0_axis[-1]
            and self.q1_axis[0] <= q[1] <= self.q1_axis[-1]
        )

    def S_raw(self, q):
        return float(self._spline(q[0], q[1], grid=False))


def _check_uniform(name: str, axis: np.ndarray) -> None:
    d = np.diff(axis)
    if np.any(d <= 0):
        raise ConfigError(f"{name} axis not strictly increasing")
    mean = float(np.mean(d))
    if np.max(np.abs(d - mean)) > _GRID_UNIFORMITY_RTOL * abs(mean):
        raise ConfigError(f"{name} axis spacing not uniform")


# ---------------------------------------------------------------------------
# Derivative operations


def eval_S(surface: EntropySurface, q) -> float:
    q = as_coords(q, surface.n)
    _require_in_domain(surface, q)
    s = float(surface.S_raw(q))
    if not math.isfinite(s):
        raise NonFiniteError(f"S overflowed at q={q.tolist()}")
    return s


def grad_S(surface: EntropySurface, q) -> np.ndarray:
    """Conjugate intensities beta_i = dS/dq^i.

    Raises DegenerateIntensityError when any |beta_i| < BETA_FLOOR, since
    T_i = 1/beta_i is meaningless there.  Use grad_S_raw for consumers
    (e.g. level-set projection) that need the bare gradient.
    """
    beta = grad_S_raw(surface, q)
    small = np.abs(beta) < BETA_FLOOR
    if small.any():
        i = int(np.argmax(small))
        raise DegenerateIntensityError(
            f"|beta_{i}| = {abs(beta[i]):.3e} < {BETA_FLOOR} at q={np.asarray(q).tolist()}"
        )
    return beta


def grad_S_raw(surface: EntropySurface, q) -> np.ndarray:
    """beta without the degeneracy floor (still domain- and finite-checked)."""
    q = as_coords(q, surface.n)
    _require_in_domain(surface, q)
    if surface.derivative_mode == "analytic":
        beta = surface.grad_closed(q)
    else:
        beta = _fd_grad(surface, q)
    if not np.all(np.isfinite(beta)):
        raise NonFiniteError(f"gradient overflowed at q={q.tolist()}")
    return beta


def hessian_S(surface: EntropySurface, q) -> np.ndarray:
    q = as_coords(q, surface.n)
    _require_in_domain(surface, q)
    if surface.derivative_mode == "analytic":
        H = surface.hessian_closed(q)
    else:
        H = _fd_hessian(surface, q)
    if not np.all(np.isfinite(H)):
        raise NonFiniteError(f"Hessian overflowed at q={q.tolist()}")
    return H


def _require_in_domain(surface, q):
    if not surface.in_domain(q):
        raise DomainError(
            f"q={q.tolist()} outside the {surface.kind} surface domain"
        )


def _require_stencil(surface, q, extents):
    # Stencil corners q +- m*h_i e_i (+- m*h_j e_j) must stay in-domain.
    n = q.size
    for i in range(n):
        for si in (-1.0, 1.0):
            p = q.copy()
            p[i] += si * extents[i]
            if not surface.in_domain(p):
                raise DomainError(
                    f"difference stencil leaves domain at q={q.tolist()} "
                    f"(channel {i}, extent {extents[i]:g})"
                )
            for j in range(i + 1, n):
                for sj in (-1.0, 1.0):
                    pc = p.copy()
                    pc[j] += sj * extents[j]
                    if not surface.in_domain(pc):
                        raise DomainError(
                            f"difference stencil corner leaves domain at "
                            f"q={q.tolist()}"
                        )


def _fd_grad(surface, q):
    h = np.asarray(surface.fd_steps if surface.fd_steps is not None
                   else default_grad_steps(q))
    _require_stencil(surface, q, 2.0 * h)
    g = np.empty(q.size)
    for i in range(q.size):
        e = np.zeros(q.size)
        e[i] = h[i]
        g[i] = (surface.S_raw(q + e) - surface.S_raw(q - e)) / (2.0 * h[i])
    return g


def _cross_stencil(surface, q, i, j, hi, hj):
    p = q.copy()
    out = 0.0
    for si in (1.0, -1.0):
        for sj in (1.0, -1.0):
            p[i] = q[i] + si * hi
            p[j] = q[j] + sj * hj
            out += si * sj * surface.S_raw(p)
    return out / (4.0 * hi * hj)


def _fd_hessian(surface, q):
    h = np.asarray(surface.fd_steps if surface.fd_steps is not None
                   else default_hess_steps(q))
    _require_stencil(surface, q, 2.0 * h)
    n = q.size
    H = np.empty((n, n))
    s0 = surface.S_raw(q)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h[i]
        H[i, i] = (surface.S_raw(q + e) - 2.0 * s0 + surface.S_raw(q - e)) \
            / h[i] ** 2
    for i in range(n):
        for j in range(i + 1, n):
            a_h = _cross_stencil(surface, q, i, j, h[i], h[j])
            a_2h = _cross_stencil(surface, q, i, j, 2.0 * h[i], 2.0 * h[j])
            # h and 2h stencils agreeing is the step-size sanity check:
            # divergence means truncation (h too big) or rounding (too small).
            if abs(a_h - a_2h) > SYMMETRY_RTOL * max(1.0, abs(a_h), abs(a_2h)):
                raise SymmetryViolationError(
                    f"cross-derivative d2S/dq{i}dq{j} stencils disagree: "
                    f"{a_h:.6g} (h) vs {a_2h:.6g} (2h); adjust fd_steps"
                )
            H[i, j] = H[j, i] = a_h
    return H
