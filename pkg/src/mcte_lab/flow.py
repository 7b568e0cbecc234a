"""Level-set tracing, coupling-coefficient quadrature, loop holonomy.

A path on S(q) = S0 is traced as a scalar ODE in one driving channel
(dq_m/dq_d = -beta_d/beta_m on the level set) with an embedded
Dormand-Prince 5(4) pair, then each accepted point is projected back onto
the level set by Newton steps along the gradient, so entropy drift stays at
the 1e-13 floor rather than accumulating with the integrator tolerance.

zeta_i = lambda_i * exp(integral of omega_i) is accumulated by per-segment
Gauss-Legendre quadrature with every node re-solved onto the level set and
the metric evaluated fresh there; interpolating stored path values would
cap the invariant check two orders of magnitude short of its target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import (
    ConfigError,
    DegenerateIntensityError,
    DomainError,
    DomainEscapeError,
    StiffnessError,
)
from .geometry import MetricPoint, metric_at, omega_at
from .surfaces import BETA_FLOOR, EntropySurface, as_coords, eval_S, grad_S_raw

# Dormand-Prince 5(4) tableau; the 5th-order weights are row 7 of A.
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
          187 / 2100, 1 / 40)


@dataclass(frozen=True)
class StepControl:
    """Tolerances for the tracer and the zeta quadrature."""

    rtol: float = 1e-12
    atol: float = 1e-14
    drift_tol: float = 1e-13
    max_steps: int = 20000
    # Cap h at this fraction of the span so even easy paths carry enough
    # samples for the downstream segment quadrature.
    h_max_frac: float = 1.0 / 16.0
    # Driving-channel swap thresholds (level-set slope in the original
    # parameterization), with hysteresis so the tracer does not chatter.
    swap_hi: float = 50.0
    swap_lo: float = 10.0
    quad_nodes: int = 7


@dataclass
class LevelSetPath:
    """Ordered samples on one entropy level set.

    zetas stays NaN per channel until zeta_along_path fills it; lam holds
    the boundary normalization lambda_i used for each filled channel.
    """

    surface: EntropySurface
    S0: float
    param_channel: int
    params: np.ndarray
    qs: np.ndarray
    betas: np.ndarray
    S_drifts: np.ndarray
    zetas: np.ndarray
    lam: np.ndarray
    truncated: bool = False
    escape_note: str = ""

    def __len__(self) -> int:
        return self.params.size

    def zT(self, i: int) -> np.ndarray:
        """zeta_i * T_i per sample (T_i = 1/beta_i)."""
        return self.zetas[:, i] / self.betas[:, i]


@dataclass(frozen=True)
class LoopSpec:
    """Closed polyline (last vertex connects back to the first)."""

    vertices: tuple
    samples_per_edge: int = 8


@dataclass(frozen=True)
class InvariantCheck:
    C_mean: np.ndarray
    max_rel_drift: np.ndarray


@dataclass(frozen=True)
class SignFlipReport:
    drift_correct: float
    drift_flipped: float
    S_drift_max: float


# ---------------------------------------------------------------------------
# Tracing


def trace_level_set(surface: EntropySurface, q0, param_channel: int,
                    span, step_ctrl: StepControl | None = None) -> LevelSetPath:
    """Trace S(q) = S(q0) from q0 until q[param_channel] reaches span[1].

    Returns the path flagged truncated (not an exception) if it leaves the
    surface domain first; raises StiffnessError if the step size underflows
    or the step budget runs out before the span end is reached.
    """
    ctrl = step_ctrl if step_ctrl is not None else StepControl()
    q0 = as_coords(q0, surface.n)
    if surface.n != 2:
        raise ConfigError("level-set tracing is implemented for n=2")
    p0 = int(param_channel)
    if p0 not in (0, 1):
        raise ConfigError(f"param_channel must be 0 or 1, got {param_channel}")
    p_start, p_end = float(span[0]), float(span[1])
    if p_start == p_end:
        raise ConfigError("empty span")
    if abs(q0[p0] - p_start) > 1e-9 * (1.0 + abs(p_start)):
        raise ConfigError(
            f"q0[{p0}] = {q0[p0]!r} must sit at the span start {p_start!r}"
        )
    S0 = eval_S(surface, q0)
    dir0 = 1.0 if p_end > p_start else -1.0
    span_len = abs(p_end - p_start)
    h_max = span_len * ctrl.h_max_frac
    end_tol = 1e-14 * (1.0 + abs(p_end))

    qs = [q0.copy()]
    betas = [grad_S_raw(surface, q0)]
    drifts = [0.0]

    q = q0.copy()
    d = p0                      # driving channel
    dirn = dir0                 # step direction for q[d]
    h = min(h_max, span_len / 100.0)
    truncated = False
    note = ""
    accepted = 0

    while True:
        beta = betas[-1]
        d, dirn, h = _maybe_swap_channel(beta, q, d, dirn, dir0, p0, h,
                                         h_max, ctrl)
        if d == p0:
            remaining = (p_end - q[d]) * dir0
            if remaining <= end_tol:
                break
            h = min(h, remaining)
        step = dirn * h

        ok, q_new, err, fail_kind = _dp_step(surface, q, d, step, ctrl)
        if ok and err <= 1.0:
            q_proj = _project_onto_level(surface, q_new, S0, ctrl.drift_tol)
            if q_proj is None:
                ok, fail_kind = False, "domain"
            else:
                q = q_proj
                qs.append(q.copy())
                betas.append(grad_S_raw(surface, q))
                drifts.append(surface.S_raw(q) - S0)
                accepted += 1
                if accepted >= ctrl.max_steps:
                    raise StiffnessError(
                        f"span end unreachable within {ctrl.max_steps} steps "
                        f"(reached q={q.tolist()})"
                    )
                h = min(h_max, h * _grow_factor(err))
                if d == p0:
                    if (p_end - q[d]) * dir0 <= end_tol:
                        break
                elif (q[p0] - p_end) * dir0 >= 0.0:
                    break       # crossed the target while channel-swapped
                continue
        h *= _shrink_factor(err, fail_kind)
        if h < 1e-14 * (1.0 + abs(q[d])):
            if fail_kind == "domain":
                truncated = True
                note = f"left the domain near q={q.tolist()}"
                break
            raise StiffnessError(
                f"step size underflow at q={q.tolist()} "
                f"(level set vertical in every parameterization tried)"
            )

    if not truncated:
        q_land = _land_on_param(surface, qs[-1], p0, p_end, S0)
        if q_land is None:
            raise StiffnessError(
                f"could not land exactly on span end {p_end!r} "
                f"from q={qs[-1].tolist()}"
            )
        if abs(qs[-1][p0] - p_end) <= 1e-9 * span_len and len(qs) > 1:
            qs.pop(), betas.pop(), drifts.pop()
        qs.append(q_land)
        betas.append(grad_S_raw(surface, q_land))
        drifts.append(surface.S_raw(q_land) - S0)

    qarr = np.vstack(qs)
    return LevelSetPath(
        surface=surface,
        S0=S0,
        param_channel=p0,
        params=qarr[:, p0].copy(),
        qs=qarr,
        betas=np.vstack(betas),
        S_drifts=np.asarray(drifts),
        zetas=np.full((len(qs), surface.n), np.nan),
        lam=np.full(surface.n, np.nan),
        truncated=truncated,
        escape_note=note,
    )


def _maybe_swap_channel(beta, q, d, dirn, dir0, p0, h, h_max, ctrl):
    """Swap the driving channel when the level set turns steep in the
    original parameterization (hysteresis keeps the choice sticky)."""
    m0 = 1 - p0
    if abs(beta[m0]) >= BETA_FLOOR:
        steep = abs(beta[p0] / beta[m0])
    else:
        steep = math.inf
    if d == p0 and steep > ctrl.swap_hi:
        if abs(beta[m0]) < BETA_FLOOR:
            raise StiffnessError(
                f"both channels degenerate near q={q.tolist()}"
            )
        rate = abs(beta[p0] / beta[m0])     # |dq_m0/dq_p0|
        dirn = dirn * _sgn(-beta[p0] / beta[m0])
        return m0, dirn, min(h * rate, h_max)
    if d != p0 and steep < ctrl.swap_lo:
        rate = abs(beta[m0] / beta[p0]) if beta[p0] != 0.0 else 1.0
        return p0, dir0, min(h * max(rate, 1e-3), h_max)
    return d, dirn, h


def _grow_factor(err):
    if err <= 0.0:
        return 5.0
    return min(5.0, max(0.2, 0.9 * err ** -0.2))


def _shrink_factor(err, fail_kind):
    if fail_kind is not None or not math.isfinite(err):
        return 0.5
    return min(0.5, max(0.1, 0.9 * err ** -0.2))


def _sgn(x: float) -> float:
    return 1.0 if x >= 0.0 else -1.0


def _slope(surface, q, d):
    """dq_m/dq_d on the level set, m the other channel (n=2)."""
    beta = grad_S_raw(surface, q)
    m = 1 - d
    if abs(beta[m]) < BETA_FLOOR:
        raise DegenerateIntensityError(
            f"beta_{m} below floor at q={q.tolist()}; level set vertical"
        )
    return -beta[d] / beta[m]


def _dp_step(surface, q, d, step, ctrl):
    """One embedded 5(4) attempt driving channel d.

    Returns (ok, q_new, scaled_error, fail_kind) with fail_kind one of
    None, "domain", "degenerate"."""
    m = 1 - d
    p, y = q[d], q[m]
    k = []
    trial = q.copy()
    try:
        for stage in range(6):
            yy = y
            for j, a in enumerate(_DP_A[stage]):
                yy += step * a * k[j]
            trial[d] = p + _DP_C[stage] * step
            trial[m] = yy
            k.append(_slope(surface, trial, d))
        y5 = y + step * sum(b * kk for b, kk in zip(_DP_B5, k))
        trial[d] = p + step
        trial[m] = y5
        k.append(_slope(surface, trial, d))
        y4 = y + step * sum(b * kk for b, kk in zip(_DP_B4, k))
    except DomainError:
        return False, q, math.inf, "domain"
    except DegenerateIntensityError:
        return False, q, math.inf, "degenerate"
    sc = ctrl.atol + ctrl.rtol * max(abs(y), abs(y5))
    err = abs(y5 - y4) / sc
    q_new = q.copy()
    q_new[d] = p + step
    q_new[m] = y5
    return True, q_new, err, None


def _project_onto_level(surface, q, S0, drift_tol):
    """Newton along the gradient direction onto S = S0; None if it strays
    out of the domain (caller treats that as a failed step)."""
    q = q.copy()
    for _ in range(4):
        if not surface.in_domain(q):
            return None
        r = surface.S_raw(q) - S0
        if abs(r) <= 0.5 * drift_tol:
            return q
        g = grad_S_raw(surface, q)
        q -= r * g / float(g @ g)
    if surface.in_domain(q) and abs(surface.S_raw(q) - S0) <= drift_tol:
        return q
    return None


def _land_on_param(surface, q, p0, p_end, S0, max_iter=50):
    """Fix q[p0] = p_end exactly and solve S = S0 in the other channel."""
    q = q.copy()
    q[p0] = p_end
    m = 1 - p0
    for _ in range(max_iter):
        if not surface.in_domain(q):
            return None
        r = surface.S_raw(q) - S0
        beta_m = grad_S_raw(surface, q)[m]
        if abs(beta_m) < BETA_FLOOR:
            return None
        dq = r / beta_m
        q[m] -= dq
        if abs(dq) <= 1e-16 * (1.0 + abs(q[m])):
            break
    if surface.in_domain(q) and abs(surface.S_raw(q) - S0) <= 1e-13:
        return q
    return None


# ---------------------------------------------------------------------------
# zeta along a path


def _segment_integral(surface, qa, qb, S0, i, nodes, weights, flip):
    """Integral of omega_i over the level-set arc between two samples.

    Parameterized by the channel with the larger coordinate change, the
    other channel re-solved onto S = S0 at every node; this stays
    well-conditioned through channel-swapped (steep) stretches.
    """
    delta = qb - qa
    m = int(np.argmax(np.abs(delta)))   # driving channel for this segment
    s = 1 - m
    a, b = qa[m], qb[m]
    if a == b:
        return 0.0
    half, mid = 0.5 * (b - a), 0.5 * (b + a)
    total = 0.0
    for x, w in zip(nodes, weights):
        t = mid + half * x
        frac = (t - a) / (b - a)
        qn = _solve_slave(surface, m, t, qa[s] + frac * delta[s], s, S0)
        mp = metric_at(surface, qn)
        comps = _omega_components(mp, i, flip)
        if abs(mp.beta[s]) < BETA_FLOOR:
            raise DegenerateIntensityError(
                f"beta_{s} below floor at quadrature node q={qn.tolist()}"
            )
        dq_s = -mp.beta[m] / mp.beta[s]     # dq_s/dq_m on the level set
        total += w * (comps[m] + comps[s] * dq_s)
    return total * half


def _solve_slave(surface, m, t, guess, s, S0, max_iter=60):
    """Newton in channel s at fixed q[m] = t until S = S0."""
    q = np.empty(2)
    q[m] = t
    q[s] = guess
    for _ in range(max_iter):
        if not surface.in_domain(q):
            raise DomainEscapeError(
                f"quadrature node left the domain at q={q.tolist()}"
            )
        r = surface.S_raw(q) - S0
        beta_s = grad_S_raw(surface, q)[s]
        dq = r / beta_s
        q[s] -= dq
        if abs(dq) <= 1e-16 * (1.0 + abs(q[s])):
            return q
    if abs(surface.S_raw(q) - S0) > 1e-12:
        raise StiffnessError(f"level-set solve stalled at q={q.tolist()}")
    return q


def _omega_components(mp: MetricPoint, i: int, flip: bool) -> np.ndarray:
    if not flip:
        return omega_at(mp, i).components
    g = mp.g.copy()
    g[0, 1] = -g[0, 1]
    g[1, 0] = -g[1, 0]
    flipped = MetricPoint(q=mp.q, g=g, beta=mp.beta, T=mp.T)
    return omega_at(flipped, i).components


def _zeta_integrals(surface, path: LevelSetPath, i: int,
                    quad_nodes: int = 7, flip: bool = False) -> np.ndarray:
    nodes, weights = leggauss(quad_nodes)
    out = np.empty(len(path))
    out[0] = 0.0
    acc = 0.0
    for k in range(1, len(path)):
        acc += _segment_integral(surface, path.qs[k - 1], path.qs[k],
                                 path.S0, i, nodes, weights, flip)
        out[k] = acc
    return out


def zeta_along_path(surface: EntropySurface, path: LevelSetPath, i: int,
                    lambda_i: float = 1.0,
                    quad_nodes: int = 7) -> LevelSetPath:
    """Fill zeta_i = lambda_i * exp(integral of omega_i) along the path."""
    if not 0 <= i < surface.n:
        raise IndexError(f"channel {i} out of range")
    integrals = _zeta_integrals(surface, path, i, quad_nodes)
    path.zetas[:, i] = lambda_i * np.exp(integrals)
    path.lam[i] = lambda_i
    return path


def cross_channel_lambdas(surface: EntropySurface, q0,
                          base_channel: int = 0,
                          lambda_base: float = 1.0) -> np.ndarray:
    """Normalization making zeta_i T_i the same constant on every channel:
    lambda_i = lambda_base * T_base(q0) / T_i(q0)."""
    mp = metric_at(surface, q0)
    return lambda_base * mp.T[base_channel] / mp.T


def invariant_check(path: LevelSetPath, channels=None) -> InvariantCheck:
    """Per-channel mean of zeta_i T_i and its maximum relative drift."""
    n = path.zetas.shape[1]
    if channels is None:
        channels = [i for i in range(n) if not np.isnan(path.lam[i])]
    C_mean = np.full(n, np.nan)
    drift = np.full(n, np.nan)
    for i in channels:
        zt = path.zT(i)
        c = float(np.mean(zt))
        C_mean[i] = c
        drift[i] = float(np.max(np.abs(zt - c)) / abs(c))
    return InvariantCheck(C_mean=C_mean, max_rel_drift=drift)


# ---------------------------------------------------------------------------
# Holonomy


def holonomy(surface: EntropySurface, loop: LoopSpec, i: int,
             quad_nodes: int = 7) -> float:
    """Loop integral of omega_i over a closed polyline.

    Vanishes when opposite-edge contributions cancel (decoupled surface);
    a nonzero value is the geometric obstruction to a globally consistent
    zeta_i over the region.
    """
    verts = [as_coords(v, surface.n) for v in loop.vertices]
    if len(verts) < 3:
        raise ConfigError("a loop needs at least 3 vertices")
    if loop.samples_per_edge < 1:
        raise ConfigError("samples_per_edge must be >= 1")
    for v in verts:
        if not surface.in_domain(v):
            raise DomainEscapeError(f"loop vertex {v.tolist()} outside domain")
    nodes, weights = leggauss(quad_nodes)
    total = 0.0
    for k in range(len(verts)):
        a, b = verts[k], verts[(k + 1) % len(verts)]
        total += _edge_integral(surface, a, b, i, loop.samples_per_edge,
                                nodes, weights)
    return total


def _edge_integral(surface, a, b, i, n_sub, nodes, weights):
    delta = b - a
    # midpoint-sample the edge for domain containment before integrating
    for t in np.linspace(0.0, 1.0, 2 * n_sub + 1):
        if not surface.in_domain(a + t * delta):
            raise DomainEscapeError(
                f"loop edge leaves the domain at {(a + t * delta).tolist()}"
            )
    total = 0.0
    for s in range(n_sub):
        t0, t1 = s / n_sub, (s + 1) / n_sub
        half, mid = 0.5 * (t1 - t0), 0.5 * (t1 + t0)
        for x, w in zip(nodes, weights):
            mp = metric_at(surface, a + (mid + half * x) * delta)
            comps = omega_at(mp, i).components
            total += w * float(comps @ delta) * half
    return total


def rectangle_loop(v0: float, v1: float, s0: float, s1: float,
                   samples_per_edge: int = 8) -> LoopSpec:
    """Axis-aligned rectangle [v0,v1] x [s0,s1], counterclockwise."""
    return LoopSpec(
        vertices=(
            np.array([v0, s0]), np.array([v1, s0]),
            np.array([v1, s1]), np.array([v0, s1]),
        ),
        samples_per_edge=samples_per_edge,
    )


def holonomy_stokes_rectangle(surface: EntropySurface, v0, v1, s0, s1, i: int,
                              n_gauss: int = 32, fd_step: float = 1e-6) -> float:
    """Area-integral cross-check for rectangular loops: integrates the
    mixed-partial defect d(omega_q1)/dq0 - d(omega_q0)/dq1 over the
    rectangle with a tensor Gauss rule, derivatives by central differences.
    """
    nodes, weights = leggauss(n_gauss)

    def comp(q, j):
        return omega_at(metric_at(surface, q), i).components[j]

    def curl(q):
        h0 = fd_step * max(1.0, abs(q[0]))
        h1 = fd_step * max(1.0, abs(q[1]))
        dv = (comp(q + [h0, 0.0], 1) - comp(q - [h0, 0.0], 1)) / (2 * h0)
        ds = (comp(q + [0.0, h1], 0) - comp(q - [0.0, h1], 0)) / (2 * h1)
        return dv - ds

    half_v, mid_v = 0.5 * (v1 - v0), 0.5 * (v1 + v0)
    half_s, mid_s = 0.5 * (s1 - s0), 0.5 * (s1 + s0)
    total = 0.0
    for xv, wv in zip(nodes, weights):
        for xs, ws in zip(nodes, weights):
            q = np.array([mid_v + half_v * xv, mid_s + half_s * xs])
            total += wv * ws * curl(q)
    return total * half_v * half_s


# ---------------------------------------------------------------------------
# Sign-flip diagnostic


def sign_flip_diagnostic(surface: EntropySurface, q0, span,
                         param_channel: int = 1, i: int = 0,
                         step_ctrl: StepControl | None = None) -> SignFlipReport:
    """Run the invariant pipeline twice: once correctly, once with the
    off-diagonal metric sign flipped inside omega only.  Tracing uses the
    true surface both times, so the entropy drift stays at the floor and
    the damage shows up purely in the invariant."""
    path = trace_level_set(surface, q0, param_channel, span, step_ctrl)
    if path.truncated:
        raise DomainEscapeError(f"diagnostic path truncated: {path.escape_note}")
    drifts = []
    for flip in (False, True):
        ints = _zeta_integrals(surface, path, i, flip=flip)
        zt = np.exp(ints) / path.betas[:, i]
        c = float(np.mean(zt))
        drifts.append(float(np.max(np.abs(zt - c)) / abs(c)))
    return SignFlipReport(
        drift_correct=drifts[0],
        drift_flipped=drifts[1],
        S_drift_max=float(np.max(np.abs(path.S_drifts))),
    )


# ---------------------------------------------------------------------------
# Artifact export


def write_path_csv(path: LevelSetPath, file_path) -> None:
    """One row per accepted sample; repr() gives the shortest lossless
    decimal form of each double, so files are byte-reproducible."""
    cols = ["param", "q0", "q1", "S_drift", "beta0", "beta1",
            "zeta0", "zeta1", "zT0", "zT1"]
    zt0 = path.zT(0)
    zt1 = path.zT(1)
    with open(file_path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for k in range(len(path)):
            row = [path.params[k], path.qs[k, 0], path.qs[k, 1],
                   path.S_drifts[k], path.betas[k, 0], path.betas[k, 1],
                   path.zetas[k, 0], path.zetas[k, 1], zt0[k], zt1[k]]
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
