"""Scenario runner: dispatches a validated config to the computational
modules and writes CSV/JSON artifacts plus a reproducibility summary.

Exit codes: 0 success, 2 configuration problems, 3 computation failures.
On failure every artifact already on disk is renamed to *.partial so a
sweep driver can resume and triage without re-reading half-written files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCENARIOS, ScenarioConfig, load_config
from .errors import ComputationError, ConfigError, MCTELabError
from .flow import (
    LoopSpec,
    cross_channel_lambdas,
    holonomy,
    holonomy_stokes_rectangle,
    invariant_check,
    rectangle_loop,
    sign_flip_diagnostic,
    trace_level_set,
    write_path_csv,
    zeta_along_path,
)
from .fluctuations import SamplerConfig, sample_metric, write_samples_csv
from .predictions import (
    dilatancy_at,
    rowe_at,
    stability_map,
    write_contour_csv,
    write_stability_csv,
)
from .surfaces import ToyGranularParams, ToyGranularSurface


class ArtifactCollector:
    """Tracks artifact files so failures can rename them to *.partial."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.names: list[str] = []

    def path(self, name: str) -> Path:
        self.names.append(name)
        return self.dir / name

    def mark_partial(self) -> None:
        for name in self.names:
            p = self.dir / name
            if p.exists():
                p.rename(p.with_name(p.name + ".partial"))

    def verify(self) -> None:
        missing = [n for n in self.names if not (self.dir / n).exists()]
        if missing:
            raise ComputationError(f"artifacts missing at summary time: "
                                   f"{missing}")


def _write_json(path: Path, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# Scenario runners (each returns the summary metrics dict)


def _run_invariant(cfg: ScenarioConfig, col: ArtifactCollector) -> dict:
    o = cfg.opts
    q0 = np.asarray(o["q0"])
    path = trace_level_set(cfg.surface, q0, o["param_channel"], o["span"])
    if not path.truncated:
        lams = cross_channel_lambdas(cfg.surface, q0)
        for i in range(cfg.surface.n):
            zeta_along_path(cfg.surface, path, i, float(lams[i]))
    # a truncated trace still leaves its coordinates on disk (zeta columns
    # stay nan) so the escape can be triaged from the .partial artifact
    write_path_csv(path, col.path("path.csv"))
    if path.truncated:
        raise ComputationError(
            f"path truncated before the span end: {path.escape_note}"
        )
    inv = invariant_check(path)
    T0 = np.abs(1.0 / path.betas[:, 0])
    return {
        "n_samples": len(path),
        "S_drift_max": float(np.max(np.abs(path.S_drifts))),
        "max_rel_drift": inv.max_rel_drift.tolist(),
        "C_mean": inv.C_mean.tolist(),
        "chi_ratio": float(T0.max() / T0.min()),
    }


def _sweep_cell(task) -> float:
    params_kwargs, c, v0, sigma0, sigma_end = task
    surface = ToyGranularSurface(
        ToyGranularParams(**{**params_kwargs, "c": c})
    )
    path = trace_level_set(surface, np.array([v0, sigma0]), 1,
                           (sigma0, sigma_end))
    if path.truncated:
        raise ComputationError(
            f"sweep cell c={c}, V0={v0} truncated: {path.escape_note}"
        )
    zeta_along_path(surface, path, 0, 1.0)
    return float(path.zetas[-1, 0])


def _run_sweep(cfg: ScenarioConfig, col: ArtifactCollector) -> dict:
    o = cfg.opts
    params_kwargs = asdict(cfg.surface.params)
    del params_kwargs["c"]
    cells = [(c, v0) for c in o["c_values"] for v0 in o["V0_values"]]
    needed = list(dict.fromkeys(
        [(0.0, v0) for v0 in o["V0_values"]] + cells
    ))
    tasks = [(params_kwargs, c, v0, o["sigma0"], o["sigma_end"])
             for c, v0 in needed]
    workers = min(cfg.jobs, len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, tasks))
    else:
        results = [_sweep_cell(t) for t in tasks]
    zeta = dict(zip(needed, results))

    with open(col.path("sweep.csv"), "w", newline="") as fh:
        fh.write("c,V0,zeta1_end,abs_zeta1_minus_1,cross_coupling_contrib\n")
        for c, v0 in cells:
            z = zeta[(c, v0)]
            cross = abs(z - zeta[(0.0, v0)])
            fh.write(f"{_fmt(c)},{_fmt(v0)},{_fmt(z)},"
                     f"{_fmt(abs(z - 1.0))},{_fmt(cross)}\n")

    # headline trends: |zeta-1| toward jamming, cross-coupling in c
    v_desc = sorted(set(o["V0_values"]), reverse=True)
    jamming_trend = all(
        _strictly_increasing([abs(zeta[(c, v0)] - 1.0) for v0 in v_desc])
        for c in o["c_values"] if c > 0
    )
    c_asc = sorted(c for c in set(o["c_values"]) if c > 0)
    coupling_trend = all(
        _strictly_increasing(
            [abs(zeta[(c, v0)] - zeta[(0.0, v0)]) for c in c_asc]
        )
        for v0 in o["V0_values"]
    )
    return {
        "cells": len(cells),
        "abs_dev_increases_toward_jamming": bool(jamming_trend),
        "cross_coupling_increases_in_c": bool(coupling_trend),
    }


def _strictly_increasing(xs) -> bool:
    return all(b > a for a, b in zip(xs, xs[1:]))


def _run_holonomy(cfg: ScenarioConfig, col: ArtifactCollector) -> dict:
    o = cfg.opts
    if "rect" in o:
        v0, v1, s0, s1 = o["rect"]
        loop = rectangle_loop(v0, v1, s0, s1, o["samples_per_edge"])
    else:
        loop = LoopSpec(
            vertices=tuple(np.asarray(v) for v in o["vertices"]),
            samples_per_edge=o["samples_per_edge"],
        )
    value = holonomy(cfg.surface, loop, o["channel"])
    stokes = None
    if o["stokes"]:
        v0, v1, s0, s1 = o["rect"]
        stokes = holonomy_stokes_rectangle(cfg.surface, v0, v1, s0, s1,
                                           o["channel"])
    payload = {
        "channel": o["channel"],
        "holonomy": value,
        "stokes_area_integral": stokes,
        "abs_difference": None if stokes is None else abs(value - stokes),
        "loop": {
            "vertices": [list(map(float, v)) for v in loop.vertices],
            "samples_per_edge": loop.samples_per_edge,
        },
    }
    _write_json(col.path("holonomy.json"), payload)
    return {k: payload[k] for k in
            ("channel", "holonomy", "stokes_area_integral", "abs_difference")}


def _run_stability(cfg: ScenarioConfig, col: ArtifactCollector) -> dict:
    o = cfg.opts
    smap = stability_map(cfg.surface, o["v_range"], o["s_range"],
                         o["n_v"], o["n_s"], o["band_scale"])
    write_stability_csv(smap, col.path("stability.csv"))
    write_contour_csv(smap, col.path("contour.csv"))
    valid = int(smap.valid.sum())
    return {
        "n_grid": int(smap.valid.size),
        "n_valid": valid,
        "n_stable": int(smap.stable.sum()),
        "n_unstable": valid - int(smap.stable.sum()),
        "n_critical": int(smap.critical.sum()),
        "n_contour_points": int(sum(len(c) for c in smap.contours)),
        "n_contour_polylines": len(smap.contours),
    }


def _run_dilatancy(cfg: ScenarioConfig, col: ArtifactCollector) -> dict:
    o = cfg.opts
    reports = [dilatancy_at(cfg.surface, np.asarray(p), o["delta"])
               for p in o["points"]]
    payload = [
        {
            "q": r.q.tolist(),
            "D_geom": r.D_geom,
            "D_path": r.D_path,
            "remainder_bound": r.remainder_bound,
            "vacuous": r.vacuous,
        }
        for r in reports
    ]
    _write_json(col.path("dilatancy.json"), payload)
    gaps = [abs(r.D_geom - r.D_path) for r in reports]
    ratios = [g / r.remainder_bound for g, r in zip(gaps, reports)
              if not r.vacuous]
    return {
        "points": len(reports),
        "max_abs_difference": max(gaps),
        "max_ratio_to_bound": max(ratios) if ratios else None,
        "any_vacuous": any(r.vacuous for r in reports),
    }


def _run_rowe(cfg: ScenarioConfig, col: ArtifactCollector) -> dict:
    o = cfg.opts
    rep = rowe_at(cfg.surface, np.asarray(o["q"]), o["K_mu"], o["R"],
                  ref_q0=None if o["ref_q0"] is None else np.asarray(o["ref_q0"]),
                  ref_lambda=o["ref_lambda"])
    payload = {
        "q": rep.q.tolist(),
        "zeta_V": rep.zeta_V,
        "K_mu": rep.K_mu,
        "R": rep.R,
        "stress_ratio": rep.stress_ratio,
        "classical_ratio": rep.classical_ratio,
        "det_g": rep.det_g,
        "is_stable": rep.is_stable,
        "is_critical": rep.is_critical,
    }
    _write_json(col.path("rowe.json"), payload)
    return payload


def _run_fluctuation(cfg: ScenarioConfig, col: ArtifactCollector) -> dict:
    o = cfg.opts
    seed = o["sampler_seed"] if o["sampler_seed"] is not None else cfg.seed
    scfg = SamplerConfig(
        q_center=tuple(o["q_center"]),
        box=tuple(o["box"]),
        n_samples=o["n_samples"],
        burn_in=o["burn_in"],
        proposal_scale=None if o["proposal_scale"] is None
        else tuple(o["proposal_scale"]),
        seed=seed,
    )
    report = sample_metric(cfg.surface, scfg, keep_samples=o["dump_samples"])
    payload = {
        "g_analytic": report.g_analytic.tolist(),
        "g_sampled": report.g_sampled.tolist(),
        "se": report.se.tolist(),
        "rel_err_frobenius": report.rel_err_frobenius,
        "ess": report.ess,
        "ess_per_channel": report.ess_per_channel.tolist(),
        "acceptance_rate": report.acceptance_rate,
        "proposal_scale_used": report.proposal_scale_used.tolist(),
        "n_samples": report.n_samples,
        "seed": seed,
        "sign_match_offdiag": bool(
            np.sign(report.g_sampled[0, 1]) == np.sign(report.g_analytic[0, 1])
        ),
    }
    _write_json(col.path("oracle.json"), payload)
    if o["dump_samples"]:
        write_samples_csv(report, col.path("samples.csv"))
    return {k: payload[k] for k in
            ("rel_err_frobenius", "ess", "acceptance_rate",
             "sign_match_offdiag")}


def _run_sign_error(cfg: ScenarioConfig, col: ArtifactCollector) -> dict:
    o = cfg.opts
    rep = sign_flip_diagnostic(cfg.surface, np.asarray(o["q0"]), o["span"],
                               o["param_channel"], o["channel"])
    return {
        "drift_correct": rep.drift_correct,
        "drift_flipped": rep.drift_flipped,
        "S_drift_max": rep.S_drift_max,
    }


_RUNNERS = {
    "invariant": _run_invariant,
    "sweep": _run_sweep,
    "holonomy": _run_holonomy,
    "stability-map": _run_stability,
    "dilatancy": _run_dilatancy,
    "rowe": _run_rowe,
    "fluctuation-check": _run_fluctuation,
    "sign-error": _run_sign_error,
}


def run(cfg: ScenarioConfig) -> dict:
    """Execute a scenario, write artifacts plus summary.json last.

    On any laboratory error the artifacts written so far are renamed to
    *.partial before the exception propagates.
    """
    col = ArtifactCollector(cfg.output_dir)
    t0 = time.perf_counter()
    try:
        metrics = _RUNNERS[cfg.scenario](cfg, col)
        col.verify()
    except MCTELabError:
        col.mark_partial()
        raise
    summary = {
        "scenario": cfg.scenario,
        "metrics": metrics,
        "artifacts": list(col.names),
        "config_hash": cfg.config_hash,
        "code_version": __version__,
        "seed": cfg.seed,
        "wall_time_s": time.perf_counter() - t0,
    }
    _write_json(col.dir / "summary.json", summary)
    return summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mcte-lab",
        description="Scenario runner for the many-channel invariant "
                    "laboratory",
    )
    parser.add_argument("scenario", choices=SCENARIOS)
    parser.add_argument("--config", required=True, help="JSON scenario config")
    parser.add_argument("--set", dest="sets", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override a config entry (dotted path)")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--jobs", type=int, default=None,
                        help="sweep worker count (default: logical cores)")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    try:
        cfg = load_config(args.config, scenario_cli=args.scenario,
                          sets=args.sets, out_cli=args.out,
                          seed_cli=args.seed, jobs=jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        summary = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MCTELabError as exc:
        print(f"computation failed ({type(exc).__name__}): {exc}",
              file=sys.stderr)
        return 3
    names = summary["artifacts"] + ["summary.json"]
    print(f"{cfg.scenario}: wrote {', '.join(names)} to {cfg.output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
