"""Scenario configuration: strict JSON parsing and surface construction.

Every key is checked against the schema of its scenario; a misspelled or
extraneous key fails fast with the offending name, because a silently
ignored parameter in a sweep is worse than a crash.  Dotted --set paths
are applied to the raw dictionary before validation, so overrides face the
same strictness.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigError, MCTELabError
from .surfaces import (
    EntropySurface,
    QuadraticDiagonalSurface,
    TabulatedSurface,
    ToyGranularParams,
    ToyGranularSurface,
)

SCENARIOS = (
    "invariant", "sweep", "holonomy", "stability-map",
    "dilatancy", "rowe", "fluctuation-check", "sign-error",
)

_COMMON_KEYS = {"scenario", "surface", "output_dir", "seed"}


@dataclass
class ScenarioConfig:
    scenario: str
    surface: EntropySurface
    opts: dict
    output_dir: str
    seed: int
    jobs: int = 1
    raw: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        payload = {k: v for k, v in self.raw.items() if k != "output_dir"}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(config_path, scenario_cli: str | None = None,
                sets=(), out_cli: str | None = None,
                seed_cli: int | None = None, jobs: int = 1) -> ScenarioConfig:
    try:
        with open(config_path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {config_path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    for item in sets:
        _apply_set(raw, item)
    return build_config(raw, scenario_cli, out_cli, seed_cli, jobs)


def build_config(raw: dict, scenario_cli: str | None = None,
                 out_cli: str | None = None, seed_cli: int | None = None,
                 jobs: int = 1) -> ScenarioConfig:
    raw = dict(raw)  # CLI overrides land in a copy, never the caller's dict
    scenario = raw.get("scenario", scenario_cli)
    if scenario is None:
        raise ConfigError("no scenario given (config key 'scenario' or CLI)")
    if scenario_cli is not None and scenario != scenario_cli:
        raise ConfigError(
            f"config says scenario {scenario!r} but the command line "
            f"says {scenario_cli!r}"
        )
    if scenario not in SCENARIOS:
        raise ConfigError(
            f"unknown scenario {scenario!r}; expected one of {SCENARIOS}"
        )
    if seed_cli is not None:
        raw["seed"] = int(seed_cli)
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"key 'seed' must be an integer, got {seed!r}")
    if out_cli is not None:
        raw["output_dir"] = str(out_cli)
    output_dir = raw.get("output_dir", ".")
    if not isinstance(output_dir, str):
        raise ConfigError("key 'output_dir' must be a string")
    raw.setdefault("scenario", scenario)

    builder = _SCENARIO_BUILDERS[scenario]
    allowed = _COMMON_KEYS | builder.keys
    for key in raw:
        if key not in allowed:
            raise ConfigError(
                f"unknown key {key!r} for scenario {scenario!r}"
            )
    if "surface" not in raw:
        raise ConfigError("missing required key 'surface'")
    surface = build_surface(raw["surface"])
    opts = builder.fn(raw, surface)
    return ScenarioConfig(
        scenario=scenario, surface=surface, opts=opts,
        output_dir=output_dir, seed=seed, jobs=max(1, int(jobs)), raw=raw,
    )


def _apply_set(raw: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"--set needs key=value, got {item!r}")
    path, value = item.split("=", 1)
    keys = [k for k in path.split(".") if k]
    if not keys:
        raise ConfigError(f"--set has an empty key path: {item!r}")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    node = raw
    for k in keys[:-1]:
        nxt = node.get(k)
        if nxt is None:
            nxt = node[k] = {}
        elif not isinstance(nxt, dict):
            raise ConfigError(
                f"--set path {path!r} descends into non-object key {k!r}"
            )
        node = nxt
    node[keys[-1]] = parsed


# ---------------------------------------------------------------------------
# Surface construction


def build_surface(spec, where: str = "surface") -> EntropySurface:
    if not isinstance(spec, dict):
        raise ConfigError(f"{where} must be an object")
    kind = spec.get("kind")
    try:
        if kind == "toy-granular":
            _check_keys(spec, {"kind", "params", "derivative_mode",
                               "fd_steps"}, where)
            pdict = spec.get("params", {})
            if not isinstance(pdict, dict):
                raise ConfigError(f"{where}.params must be an object")
            _check_keys(pdict, {"a", "b", "c", "V_J", "sigma_max"},
                        f"{where}.params")
            params = ToyGranularParams(
                **{k: _num(v, f"{where}.params.{k}") for k, v in pdict.items()}
            )
            return ToyGranularSurface(
                params,
                derivative_mode=spec.get("derivative_mode", "analytic"),
                fd_steps=spec.get("fd_steps"),
            )
        if kind == "quadratic-diagonal":
            _check_keys(spec, {"kind", "k", "q_star", "s0",
                               "derivative_mode", "fd_steps"}, where)
            return QuadraticDiagonalSurface(
                k=_vec(spec.get("k", [1.0, 1.0]), f"{where}.k"),
                q_star=_vec(spec.get("q_star", [0.0, 0.0]), f"{where}.q_star"),
                s0=_num(spec.get("s0", 0.0), f"{where}.s0"),
                derivative_mode=spec.get("derivative_mode", "analytic"),
                fd_steps=spec.get("fd_steps"),
            )
        if kind == "external-tabulated":
            _check_keys(spec, {"kind", "file", "fd_steps"}, where)
            if "file" not in spec:
                raise ConfigError(f"{where}.file is required for "
                                  f"external-tabulated surfaces")
            return TabulatedSurface.from_csv(spec["file"],
                                             fd_steps=spec.get("fd_steps"))
    except ConfigError:
        raise
    except MCTELabError as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc
    raise ConfigError(
        f"unknown surface kind {kind!r} in {where}; expected "
        f"toy-granular, quadratic-diagonal or external-tabulated"
    )


def _check_keys(d: dict, allowed: set, where: str) -> None:
    for key in d:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def _num(v, key) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"key {key!r} must be a number, got {v!r}")
    return float(v)


def _int(v, key) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"key {key!r} must be an integer, got {v!r}")
    return v


def _vec(v, key, length: int | None = None) -> list:
    if not isinstance(v, (list, tuple)):
        raise ConfigError(f"key {key!r} must be an array, got {v!r}")
    out = [_num(x, f"{key}[{i}]") for i, x in enumerate(v)]
    if length is not None and len(out) != length:
        raise ConfigError(f"key {key!r} must have {length} entries")
    return out


# ---------------------------------------------------------------------------
# Per-scenario option builders


@dataclass(frozen=True)
class _Builder:
    keys: set
    fn: object


def _require(raw, key):
    if key not in raw:
        raise ConfigError(f"missing required key {key!r}")
    return raw[key]


def _cfg_invariant(raw, surface):
    return {
        "q0": _vec(_require(raw, "q0"), "q0", 2),
        "span": _vec(_require(raw, "span"), "span", 2),
        "param_channel": _int(raw.get("param_channel", 1), "param_channel"),
    }


def _cfg_sweep(raw, surface):
    if surface.kind != "toy-granular":
        raise ConfigError("sweep varies the coupling c and needs a "
                          "toy-granular surface")
    c_values = _vec(_require(raw, "c_values"), "c_values")
    v0_values = _vec(_require(raw, "V0_values"), "V0_values")
    if not c_values or not v0_values:
        raise ConfigError("c_values and V0_values must be non-empty")
    if any(c < 0 for c in c_values):
        raise ConfigError("c_values must be >= 0")
    return {
        "c_values": c_values,
        "V0_values": v0_values,
        "sigma0": _num(_require(raw, "sigma0"), "sigma0"),
        "sigma_end": _num(_require(raw, "sigma_end"), "sigma_end"),
    }


def _cfg_holonomy(raw, surface):
    has_rect = "rect" in raw
    has_verts = "vertices" in raw
    if has_rect == has_verts:
        raise ConfigError("holonomy needs exactly one of 'rect' "
                          "([v0,v1,s0,s1]) or 'vertices'")
    opts = {
        "channel": _int(raw.get("channel", 0), "channel"),
        "samples_per_edge": _int(raw.get("samples_per_edge", 8),
                                 "samples_per_edge"),
        "stokes": raw.get("stokes", has_rect),
    }
    if not isinstance(opts["stokes"], bool):
        raise ConfigError("key 'stokes' must be true or false")
    if has_rect:
        opts["rect"] = _vec(raw["rect"], "rect", 4)
    else:
        verts = raw["vertices"]
        if not isinstance(verts, list) or len(verts) < 3:
            raise ConfigError("'vertices' must be an array of >= 3 points")
        opts["vertices"] = [_vec(v, f"vertices[{i}]", 2)
                            for i, v in enumerate(verts)]
        if opts["stokes"]:
            raise ConfigError("the area cross-check needs 'rect'")
    return opts


def _cfg_stability(raw, surface):
    n_v = _int(raw.get("n_v", 64), "n_v")
    n_s = _int(raw.get("n_s", 64), "n_s")
    if n_v < 2 or n_s < 2:
        raise ConfigError("n_v and n_s must be >= 2")
    return {
        "v_range": _vec(_require(raw, "v_range"), "v_range", 2),
        "s_range": _vec(_require(raw, "s_range"), "s_range", 2),
        "n_v": n_v,
        "n_s": n_s,
        "band_scale": _num(raw.get("band_scale", 1e-10), "band_scale"),
    }


def _cfg_dilatancy(raw, surface):
    points = _require(raw, "points")
    if not isinstance(points, list) or not points:
        raise ConfigError("'points' must be a non-empty array of [V, sigma]")
    delta = _num(raw.get("delta", 1e-4), "delta")
    if delta <= 0:
        raise ConfigError("'delta' must be > 0")
    return {
        "points": [_vec(p, f"points[{i}]", 2) for i, p in enumerate(points)],
        "delta": delta,
    }


def _cfg_rowe(raw, surface):
    return {
        "q": _vec(_require(raw, "q"), "q", 2),
        "ref_q0": (_vec(raw["ref_q0"], "ref_q0", 2)
                   if "ref_q0" in raw else None),
        "K_mu": _num(raw.get("K_mu", 3.0), "K_mu"),
        "R": _num(raw.get("R", 1.0), "R"),
        "ref_lambda": _num(raw.get("ref_lambda", 1.0), "ref_lambda"),
    }


def _cfg_fluctuation(raw, surface):
    sampler = _require(raw, "sampler")
    if not isinstance(sampler, dict):
        raise ConfigError("'sampler' must be an object")
    _check_keys(sampler, {"q_center", "box", "n_samples", "burn_in",
                          "proposal_scale", "seed"}, "sampler")
    return {
        "q_center": _vec(_require(sampler, "q_center"), "sampler.q_center", 2),
        "box": _vec(_require(sampler, "box"), "sampler.box", 2),
        "n_samples": _int(sampler.get("n_samples", 100_000),
                          "sampler.n_samples"),
        "burn_in": _int(sampler.get("burn_in", 20_000), "sampler.burn_in"),
        "proposal_scale": (_vec(sampler["proposal_scale"],
                                "sampler.proposal_scale", 2)
                           if "proposal_scale" in sampler else None),
        "sampler_seed": (_int(sampler["seed"], "sampler.seed")
                         if "seed" in sampler else None),
        "dump_samples": bool(raw.get("dump_samples", False)),
    }


def _cfg_sign_error(raw, surface):
    return {
        "q0": _vec(_require(raw, "q0"), "q0", 2),
        "span": _vec(_require(raw, "span"), "span", 2),
        "param_channel": _int(raw.get("param_channel", 1), "param_channel"),
        "channel": _int(raw.get("channel", 0), "channel"),
    }


_SCENARIO_BUILDERS = {
    "invariant": _Builder({"q0", "span", "param_channel"}, _cfg_invariant),
    "sweep": _Builder({"c_values", "V0_values", "sigma0", "sigma_end"},
                      _cfg_sweep),
    "holonomy": _Builder({"rect", "vertices", "channel", "samples_per_edge",
                          "stokes"}, _cfg_holonomy),
    "stability-map": _Builder({"v_range", "s_range", "n_v", "n_s",
                               "band_scale"}, _cfg_stability),
    "dilatancy": _Builder({"points", "delta"}, _cfg_dilatancy),
    "rowe": _Builder({"q", "ref_q0", "K_mu", "R", "ref_lambda"}, _cfg_rowe),
    "fluctuation-check": _Builder({"sampler", "dump_samples"},
                                  _cfg_fluctuation),
    "sign-error": _Builder({"q0", "span", "param_channel", "channel"},
                           _cfg_sign_error),
}
