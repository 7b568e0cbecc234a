"""Granular-plasticity predictions from the entropy surface alone.

Three observable consequences of the channel coupling:

* dilatancy: the leading term of D = -(dV/V)/(dsigma/sigma) along an
  invariant path is (g_Vs/g_VV)*(chi/A), checked against a central
  difference of the actually traced level set;
* the corrected stress ratio zeta_V * K_mu * R, with K_mu and R supplied
  by the caller (contact-scale constants, not derivable from S);
* the stability map det g >= 0 with the det g = 0 critical contour
  extracted by marching squares and bisection refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateIntensityError
from .flow import StepControl, trace_level_set, zeta_along_path
from .geometry import metric_at, stability_at
from .surfaces import EntropySurface, as_coords, eval_S, hessian_S

# Remainder constant in |D_geom - D_path| <= K * (g_Vs/g_VV)^2, frozen
# after one calibration run on the c=0.15 toy surface over
# V0 in {0.79, 0.80, 0.85, 0.90} x sigma in {0.1, 0.2, 0.3}: twice the
# largest observed ratio 19.4896 (see scripts/calibrate_dilatancy_bound.py).
K_DILATANCY = 38.98

# Below this coupling ratio the leading-order dilatancy prediction is
# vacuous: D_geom ~ 0 while the exact path dilatancy generally is not.
VACUOUS_COUPLING = 1e-12


@dataclass(frozen=True)
class DilatancyReport:
    q: np.ndarray
    D_geom: float
    D_path: float
    remainder_bound: float
    vacuous: bool


@dataclass(frozen=True)
class RoweReport:
    q: np.ndarray
    zeta_V: float
    K_mu: float
    R: float
    stress_ratio: float
    classical_ratio: float
    det_g: float
    is_stable: bool
    is_critical: bool


@dataclass
class StabilityMap:
    V_axis: np.ndarray
    sigma_axis: np.ndarray
    det_g: np.ndarray          # (n_v, n_s); NaN where invalid
    valid: np.ndarray
    stable: np.ndarray
    critical: np.ndarray
    contours: list             # list of (m, 2) arrays of (V, sigma) points


def dilatancy_at(surface: EntropySurface, q, delta: float = 1e-4,
                 step_ctrl: StepControl | None = None) -> DilatancyReport:
    """Leading-order dilatancy vs the traced-path central difference.

    The constant-invariant path through q coincides with the entropy level
    set, so D_path comes from tracing sigma -> sigma +- delta and
    differencing the volume endpoint.
    """
    q = as_coords(q, 2)
    mp = metric_at(surface, q)
    ratio = mp.g[0, 1] / mp.g[0, 0]
    D_geom = float(ratio * mp.T[0] / mp.T[1])
    sigma = q[1]
    v_hi = _traced_endpoint(surface, q, sigma + delta, step_ctrl)
    v_lo = _traced_endpoint(surface, q, sigma - delta, step_ctrl)
    dV_dsigma = (v_hi - v_lo) / (2.0 * delta)
    D_path = float(-(sigma / q[0]) * dV_dsigma)
    return DilatancyReport(
        q=q,
        D_geom=D_geom,
        D_path=D_path,
        remainder_bound=float(ratio * ratio),
        vacuous=bool(abs(ratio) < VACUOUS_COUPLING),
    )


def _traced_endpoint(surface, q, sigma_end, step_ctrl):
    path = trace_level_set(surface, q, 1, (q[1], sigma_end), step_ctrl)
    return float(path.qs[-1, 0])


def rowe_at(surface: EntropySurface, q, K_mu: float = 3.0, R: float = 1.0,
            ref_q0=None, ref_lambda: float = 1.0,
            step_ctrl: StepControl | None = None) -> RoweReport:
    """Corrected stress ratio zeta_V * K_mu * R at q.

    zeta_V is path-integrated from ref_q0 (where it equals ref_lambda)
    along the shared entropy level set; ref_q0 = None normalizes at q
    itself.  Evaluated on the det g = 0 contour the stress ratio is the
    critical-state ratio implied by the geometry.
    """
    q = as_coords(q, 2)
    if ref_q0 is None:
        zeta_V = float(ref_lambda)
    else:
        ref_q0 = as_coords(ref_q0, 2)
        s_ref, s_q = eval_S(surface, ref_q0), eval_S(surface, q)
        if abs(s_ref - s_q) > 1e-9 * (1.0 + abs(s_q)):
            raise ConfigError(
                f"reference point {ref_q0.tolist()} is not on the level set "
                f"of {q.tolist()} (S differs by {abs(s_ref - s_q):.3e})"
            )
        if abs(q[1] - ref_q0[1]) < 1e-12:
            zeta_V = float(ref_lambda)
        else:
            path = trace_level_set(surface, ref_q0, 1, (ref_q0[1], q[1]),
                                   step_ctrl)
            zeta_along_path(surface, path, 0, ref_lambda)
            zeta_V = float(path.zetas[-1, 0])
    mp = metric_at(surface, q)
    flags = stability_at(mp)
    classical = K_mu * R
    return RoweReport(
        q=q,
        zeta_V=zeta_V,
        K_mu=float(K_mu),
        R=float(R),
        stress_ratio=zeta_V * classical,
        classical_ratio=classical,
        det_g=flags.det_g,
        is_stable=flags.is_stable,
        is_critical=flags.is_critical,
    )


# ---------------------------------------------------------------------------
# Stability map


def _det_and_band(surface, q, band_scale):
    """det g and the critical zero band, from the Hessian alone (no
    intensity floor: the map must work where beta happens to vanish)."""
    g = -hessian_S(surface, q)
    det = float(g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0])
    band = band_scale * float(np.sum(g * g))
    return det, band


# Marching-squares segment table.  Corner bits: 1=BL, 2=BR, 4=TR, 8=TL
# (set when det > 0); edges: 0=bottom, 1=right, 2=top, 3=left.  Saddle
# cases 5 and 10 are resolved by the sign at the cell center.
_MS_TABLE = {
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)],
    6: [(0, 2)], 7: [(3, 2)], 8: [(3, 2)], 9: [(0, 2)],
    11: [(1, 2)], 12: [(3, 1)], 13: [(0, 1)], 14: [(3, 0)],
}


def stability_map(surface: EntropySurface, v_range, s_range,
                  n_v: int = 64, n_s: int = 64,
                  band_scale: float = 1e-10) -> StabilityMap:
    """det g classification on a grid plus the refined critical contour.

    Out-of-domain grid points become invalid cells, not errors.  Contour
    crossings on grid edges are sharpened by bisection until the
    coordinate interval is below 1e-12, well inside the zero band.
    """
    if n_v < 2 or n_s < 2:
        raise ConfigError("stability map needs at least a 2x2 grid")
    V_axis = np.linspace(float(v_range[0]), float(v_range[1]), n_v)
    s_axis = np.linspace(float(s_range[0]), float(s_range[1]), n_s)
    det = np.full((n_v, n_s), np.nan)
    valid = np.zeros((n_v, n_s), dtype=bool)
    stable = np.zeros((n_v, n_s), dtype=bool)
    critical = np.zeros((n_v, n_s), dtype=bool)
    for i, v in enumerate(V_axis):
        for j, s in enumerate(s_axis):
            q = np.array([v, s])
            if not surface.in_domain(q):
                continue
            d, band = _det_and_band(surface, q, band_scale)
            det[i, j] = d
            valid[i, j] = True
            stable[i, j] = d >= -band
            critical[i, j] = abs(d) <= band
    segments = _contour_segments(surface, V_axis, s_axis, det, valid,
                                 band_scale)
    return StabilityMap(
        V_axis=V_axis,
        sigma_axis=s_axis,
        det_g=det,
        valid=valid,
        stable=stable,
        critical=critical,
        contours=_chain_segments(segments),
    )


def _contour_segments(surface, V_axis, s_axis, det, valid, band_scale):
    n_v, n_s = det.shape
    segments = []
    for i in range(n_v - 1):
        for j in range(n_s - 1):
            corners = ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1))
            if not all(valid[c] for c in corners):
                continue
            case = 0
            for bit, c in enumerate(corners):
                if det[c] > 0.0:
                    case |= 1 << bit
            if case in (0, 15):
                continue
            edges = _ms_edges(surface, case, V_axis[i], V_axis[i + 1],
                              s_axis[j], s_axis[j + 1], band_scale)
            crossing = {}

            def point(edge):
                if edge not in crossing:
                    (ca, cb) = {
                        0: ((i, j), (i + 1, j)),
                        1: ((i + 1, j), (i + 1, j + 1)),
                        2: ((i, j + 1), (i + 1, j + 1)),
                        3: ((i, j), (i, j + 1)),
                    }[edge]
                    qa = np.array([V_axis[ca[0]], s_axis[ca[1]]])
                    qb = np.array([V_axis[cb[0]], s_axis[cb[1]]])
                    crossing[edge] = _bisect_zero(surface, qa, qb,
                                                  det[ca], det[cb],
                                                  band_scale)
                return crossing[edge]

            for ea, eb in edges:
                segments.append((point(ea), point(eb)))
    return segments


def _ms_edges(surface, case, v0, v1, s0, s1, band_scale):
    if case in _MS_TABLE:
        return _MS_TABLE[case]
    # saddle: pick the pairing consistent with the center sign
    qc = np.array([0.5 * (v0 + v1), 0.5 * (s0 + s1)])
    center, _ = _det_and_band(surface, qc, band_scale)
    if case == 5:
        return [(0, 1), (3, 2)] if center > 0.0 else [(3, 0), (1, 2)]
    if case == 10:
        return [(3, 0), (1, 2)] if center > 0.0 else [(0, 1), (3, 2)]
    raise AssertionError(f"unreachable marching-squares case {case}")


def _bisect_zero(surface, qa, qb, da, db, band_scale, max_iter=200):
    """Root of det g along the segment qa-qb, bisected until the
    coordinate interval drops below 1e-12."""
    if (da > 0.0) == (db > 0.0):
        raise AssertionError("bisection called without a sign change")
    scale = 1.0 + max(float(np.max(np.abs(qa))), float(np.max(np.abs(qb))))
    for _ in range(max_iter):
        qm = 0.5 * (qa + qb)
        if float(np.max(np.abs(qb - qa))) < 1e-12 * scale:
            return qm
        dm, _ = _det_and_band(surface, qm, band_scale)
        if dm == 0.0:
            return qm
        if (dm > 0.0) == (da > 0.0):
            qa, da = qm, dm
        else:
            qb, db = qm, dm
    return 0.5 * (qa + qb)


def _chain_segments(segments, decimals=9):
    """Join marching-squares segments into polylines by shared endpoints."""
    if not segments:
        return []

    def key(p):
        return (round(float(p[0]), decimals), round(float(p[1]), decimals))

    adjacency = {}
    seg_points = []
    for a, b in segments:
        ka, kb = key(a), key(b)
        if ka == kb:
            continue
        idx = len(seg_points)
        seg_points.append((a, b))
        adjacency.setdefault(ka, []).append((idx, 0))
        adjacency.setdefault(kb, []).append((idx, 1))

    used = [False] * len(seg_points)
    chains = []
    # open chains first (start at degree-1 nodes), then leftover loops
    starts = [k for k, v in adjacency.items() if len(v) == 1]
    for start_key in starts + list(adjacency.keys()):
        for idx, end in adjacency.get(start_key, []):
            if used[idx]:
                continue
            chain = _walk_chain(seg_points, adjacency, used, idx, end, key)
            if len(chain) >= 2:
                chains.append(np.asarray(chain))
    return chains


def _walk_chain(seg_points, adjacency, used, idx, end, key):
    chain = []
    a, b = seg_points[idx]
    cur, nxt = (a, b) if end == 0 else (b, a)
    chain.append(cur)
    used[idx] = True
    while True:
        chain.append(nxt)
        candidates = [
            (i, e) for i, e in adjacency.get(key(nxt), [])
            if not used[i]
        ]
        if not candidates:
            return chain
        idx, end = candidates[0]
        used[idx] = True
        a, b = seg_points[idx]
        nxt = b if end == 0 else a


# ---------------------------------------------------------------------------
# Artifact export


def write_stability_csv(smap: StabilityMap, file_path) -> None:
    """Valid grid points only, row-major in V."""
    with open(file_path, "w", newline="") as fh:
        fh.write("V,sigma,det_g,stable,critical\n")
        for i, v in enumerate(smap.V_axis):
            for j, s in enumerate(smap.sigma_axis):
                if not smap.valid[i, j]:
                    continue
                fh.write(
                    f"{float(v)!r},{float(s)!r},{float(smap.det_g[i, j])!r},"
                    f"{'true' if smap.stable[i, j] else 'false'},"
                    f"{'true' if smap.critical[i, j] else 'false'}\n"
                )


def write_contour_csv(smap: StabilityMap, file_path) -> None:
    """Refined critical-contour points, chained polylines concatenated."""
    with open(file_path, "w", newline="") as fh:
        fh.write("V,sigma\n")
        for chain in smap.contours:
            for p in chain:
                fh.write(f"{float(p[0])!r},{float(p[1])!r}\n")
