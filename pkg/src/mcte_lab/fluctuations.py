"""Fluctuation oracle: the metric as the precision matrix of fluctuations.

Independent validation path for everything the geometry module derives
from derivatives: sample q from the density proportional to exp(S(q))
restricted to a window, invert the sample covariance, and compare with the
negated Hessian at the window center.  The comparison uses the Hessian
directly rather than the metric-point wrapper so it stays meaningful at a
stationary point of S (where the intensities vanish but the curvature is
exactly what the sampler measures).

The chain is a plain random-walk Metropolis with all randomness pre-drawn
from a seeded generator, so a report is bit-reproducible; the proposal
scale is tuned to 30-50% acceptance during burn-in and then frozen, which
preserves detailed balance for the retained samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, NonErgodicError
from .surfaces import EntropySurface, as_coords, hessian_S

_COND_LIMIT = 1e12
_MIN_ESS = 100.0
_TUNE_WINDOWS = 10


@dataclass(frozen=True)
class SamplerConfig:
    q_center: tuple
    box: tuple                   # per-channel half-widths
    n_samples: int = 100_000
    burn_in: int = 20_000
    proposal_scale: tuple | None = None   # None: start from box/8
    seed: int = 0


@dataclass(frozen=True)
class OracleReport:
    g_analytic: np.ndarray
    g_sampled: np.ndarray
    rel_err_frobenius: float
    ess: float
    ess_per_channel: np.ndarray
    acceptance_rate: float
    proposal_scale_used: np.ndarray
    se: np.ndarray               # per-entry standard error of g_sampled
    n_samples: int
    samples: np.ndarray | None = None


def sample_metric(surface: EntropySurface, cfg: SamplerConfig,
                  keep_samples: bool = False) -> OracleReport:
    """Metropolis estimate of the precision matrix on a boxed window."""
    center = as_coords(cfg.q_center, 2)
    box = np.asarray(cfg.box, dtype=float)
    if box.shape != (2,) or np.any(box <= 0.0):
        raise ConfigError("box must be two positive half-widths")
    if cfg.n_samples < 10_000:
        raise ConfigError("n_samples must be >= 10000")
    if cfg.burn_in < _TUNE_WINDOWS:
        raise ConfigError(f"burn_in must be >= {_TUNE_WINDOWS}")
    if cfg.proposal_scale is None:
        scale = box / 8.0
    else:
        scale = np.asarray(cfg.proposal_scale, dtype=float)
        if scale.shape != (2,) or np.any(scale <= 0.0):
            raise ConfigError("proposal_scale must be two positive reals")

    lo, hi = center - box, center + box
    _check_window(surface, lo, hi)
    g_analytic = -hessian_S(surface, center)

    rng = np.random.default_rng(cfg.seed)
    total = cfg.burn_in + cfg.n_samples
    normals = rng.standard_normal((total, 2))
    # log(1 - u) maps [0,1) onto (0,1] before the log, so u = 0 is safe
    log_u = np.log(1.0 - rng.random(total))

    scalar_S = surface.scalar_S
    v, s = float(center[0]), float(center[1])
    logp = scalar_S(v, s)
    lo0, lo1, hi0, hi1 = float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])
    sc0, sc1 = float(scale[0]), float(scale[1])

    # burn-in: tune the proposal per window, then freeze
    window = cfg.burn_in // _TUNE_WINDOWS
    k = 0
    for w in range(_TUNE_WINDOWS):
        acc = 0
        end = cfg.burn_in if w == _TUNE_WINDOWS - 1 else k + window
        count = end - k
        while k < end:
            v2 = v + sc0 * normals[k, 0]
            s2 = s + sc1 * normals[k, 1]
            if lo0 <= v2 <= hi0 and lo1 <= s2 <= hi1:
                lp2 = scalar_S(v2, s2)
                if lp2 - logp > log_u[k]:
                    v, s, logp = v2, s2, lp2
                    acc += 1
            k += 1
        rate = acc / count if count else 0.0
        if rate < 0.30:
            sc0 *= 0.8
            sc1 *= 0.8
        elif rate > 0.50:
            sc0 *= 1.25
            sc1 *= 1.25

    vs = np.empty(cfg.n_samples)
    ss = np.empty(cfg.n_samples)
    accepted = 0
    for m in range(cfg.n_samples):
        v2 = v + sc0 * normals[k, 0]
        s2 = s + sc1 * normals[k, 1]
        if lo0 <= v2 <= hi0 and lo1 <= s2 <= hi1:
            lp2 = scalar_S(v2, s2)
            if lp2 - logp > log_u[k]:
                v, s, logp = v2, s2, lp2
                accepted += 1
        vs[m] = v
        ss[m] = s
        k += 1

    rate = accepted / cfg.n_samples
    if rate < 0.05 or rate > 0.95:
        raise NonErgodicError(
            f"acceptance rate {rate:.3f} outside [0.05, 0.95]; "
            f"proposal mis-scaled for this window"
        )

    ess = np.array([_ess(vs), _ess(ss)])
    ess_min = float(ess.min())
    if ess_min <= _MIN_ESS:
        raise NonErgodicError(
            f"effective sample size {ess_min:.1f} <= {_MIN_ESS:.0f}; "
            f"chain too correlated for a valid report"
        )

    x = np.column_stack([vs, ss])
    x -= x.mean(axis=0)
    cov = (x.T @ x) / (cfg.n_samples - 1)
    g_sampled = _invert_spd(cov)
    se = np.sqrt(
        (g_sampled**2 + np.outer(np.diag(g_sampled), np.diag(g_sampled)))
        / ess_min
    )
    rel_err = float(
        np.linalg.norm(g_sampled - g_analytic) / np.linalg.norm(g_analytic)
    )
    return OracleReport(
        g_analytic=g_analytic,
        g_sampled=g_sampled,
        rel_err_frobenius=rel_err,
        ess=ess_min,
        ess_per_channel=ess,
        acceptance_rate=rate,
        proposal_scale_used=np.array([sc0, sc1]),
        se=se,
        n_samples=cfg.n_samples,
        samples=np.column_stack([vs, ss]) if keep_samples else None,
    )


def _check_window(surface, lo, hi):
    """The window must sit inside the domain with S bounded above on it."""
    for v in np.linspace(lo[0], hi[0], 5):
        for s in np.linspace(lo[1], hi[1], 5):
            val = surface.scalar_S(float(v), float(s))
            if val == -math.inf:
                raise DomainError(
                    f"window point ({v}, {s}) outside the surface domain"
                )
            if not math.isfinite(val):
                raise DomainError(
                    f"S unbounded on the window at ({v}, {s})"
                )


def _ess(x: np.ndarray) -> float:
    """Effective sample size from the FFT autocorrelation, summing
    initial positive pairs of the autocorrelation sequence."""
    n = x.size
    xc = x - x.mean()
    var = float(xc @ xc) / n
    if var == 0.0:
        return float(n)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (var * n)
    s = 0.0
    k = 1
    while k + 1 < n:
        pair = acf[k] + acf[k + 1]
        if pair <= 0.0:
            break
        s += pair
        k += 2
    return float(n / (1.0 + 2.0 * s))


def _invert_spd(cov: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(cov)
    if w.min() <= 0.0 or w.max() / w.min() > _COND_LIMIT:
        raise NonErgodicError(
            f"sample covariance ill-conditioned "
            f"(eigenvalues {w.tolist()}); window too degenerate to invert"
        )
    inv = (U / w) @ U.T
    return 0.5 * (inv + inv.T)


def write_samples_csv(report: OracleReport, file_path) -> None:
    """Optional raw-sample dump (large; off by default in the runner)."""
    if report.samples is None:
        raise ConfigError("report carries no samples; rerun keeping them")
    with open(file_path, "w", newline="") as fh:
        fh.write("q0,q1\n")
        for v, s in report.samples:
            fh.write(f"{float(v)!r},{float(s)!r}\n")
