"""The four figure kinds rendered from laboratory artifacts.

Rendering never recomputes anything: every curve is a column pulled
straight from a CSV or JSON artifact.  Builders return a Figure so tests
can inspect axes and line data; render() owns file output.  Style is
fixed and no timestamp metadata is written, so re-rendering the same
artifacts reproduces the file byte for byte.
"""

from dataclasses import dataclass, field

import matplotlib as mpl
import numpy as np
from matplotlib.colors import Normalize
from matplotlib.figure import Figure

from .schemas import (
    CONTOUR_COLUMNS,
    STABILITY_COLUMNS,
    SchemaError,
    read_contour_csv,
    read_holonomy_json,
    read_path_csv,
    read_stability_csv,
    read_sweep_csv,
)


@dataclass(frozen=True)
class FigureStyle:
    width: float = 3.4          # single-column width in inches
    font_size: float = 8.0
    dpi: int = 300
    fmt: str = "pdf"


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple
    output: str
    style: FigureStyle = field(default_factory=FigureStyle)


_RC = {
    "font.family": "DejaVu Sans",
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.0,
    "legend.frameon": False,
}


def _only_csvs(spec, n):
    inputs = [str(p) for p in spec.inputs]
    if len(inputs) != n or not all(p.endswith(".csv") for p in inputs):
        raise SchemaError(
            f"{spec.kind} expects exactly {n} CSV input(s), got {inputs}"
        )
    return inputs


def _deviation(path, channel, C):
    zT = path[f"zT{channel}"]
    return np.abs(zT / C - 1.0)


def _invariant3panel(spec, fig):
    (src,) = _only_csvs(spec, 1)
    path = read_path_csv(src)
    x = path["param"]
    finite = [i for i in (0, 1) if np.any(np.isfinite(path[f"zT{i}"]))]
    if not finite:
        raise SchemaError(f"{src}: zeta columns contain no finite samples")
    C = float(np.nanmean(path[f"zT{finite[0]}"]))

    axes = fig.subplots(3, 1, sharex=True)
    ax_chi, ax_zeta, ax_dev = axes

    ax_chi.plot(x, 1.0 / path["beta0"], color="C0")
    ax_chi.set_ylabel(r"$\chi = 1/\beta_V$")

    for i, ls in zip(finite, ("-", "--")):
        ax_zeta.plot(x, path[f"zeta{i}"], ls, label=rf"$\zeta_{i}$")
    ax_zeta.set_ylabel(r"$\zeta_i$")
    ax_zeta.legend(loc="best")

    for i, ls in zip(finite, ("-", "--")):
        ax_dev.plot(x, _deviation(path, i, C), ls,
                    label=rf"$|\zeta_{i} T_{i}/C - 1|$")
    ax_dev.set_yscale("log")
    ax_dev.axhline(1e-10, color="0.6", lw=0.6, ls=":")
    ax_dev.set_ylabel(r"$|\zeta_i T_i / C - 1|$")
    ax_dev.set_xlabel("path parameter")
    ax_dev.legend(loc="best")
    fig.set_size_inches(spec.style.width, 1.7 * spec.style.width)
    return fig


def _levelset_fan(spec, fig):
    csvs = [str(p) for p in spec.inputs if str(p).endswith(".csv")]
    jsons = [str(p) for p in spec.inputs if str(p).endswith(".json")]
    if not csvs or len(jsons) > 1 or len(csvs) + len(jsons) != len(
            spec.inputs):
        raise SchemaError(
            "levelset_fan expects one or more path CSVs plus at most one "
            f"holonomy JSON, got {[str(p) for p in spec.inputs]}"
        )
    ax = fig.subplots()
    for src in csvs:
        path = read_path_csv(src)
        ax.plot(path["q0"], path["q1"],
                label=rf"$V_0 = {path['q0'][0]:g}$")
    if jsons:
        doc = read_holonomy_json(jsons[0])
        verts = doc["loop"]["vertices"]
        closed = np.vstack([verts, verts[:1]])
        ax.plot(closed[:, 0], closed[:, 1], "k--", lw=0.8)
        ax.annotate(rf"$\oint\omega = {doc['holonomy']:.3g}$",
                    xy=verts.mean(axis=0), ha="center",
                    fontsize=spec.style.font_size)
    ax.set_xlabel("$V$")
    ax.set_ylabel(r"$\sigma$")
    ax.legend(loc="best")
    fig.set_size_inches(spec.style.width, 0.9 * spec.style.width)
    return fig


def _sniff_header(file_path):
    try:
        with open(file_path, newline="") as fh:
            return tuple(fh.readline().strip().split(","))
    except OSError as exc:
        raise SchemaError(f"{file_path}: {exc}") from exc


def _split_chains(pts):
    """Break the contour point list into polylines at distance jumps.

    The CSV concatenates refined chains without separators; consecutive
    points inside one chain sit a grid cell apart or closer, so a gap
    several times the median step marks a chain boundary.
    """
    if len(pts) < 2:
        return [pts] if len(pts) else []
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cut = 5.0 * max(float(np.median(steps)), 1e-12)
    breaks = np.nonzero(steps > cut)[0] + 1
    return np.split(pts, breaks)


def _stability_map(spec, fig):
    a, b = _only_csvs(spec, 2)
    headers = {a: _sniff_header(a), b: _sniff_header(b)}
    stab = [p for p, h in headers.items() if h == STABILITY_COLUMNS]
    cont = [p for p, h in headers.items() if h == CONTOUR_COLUMNS]
    if len(stab) != 1 or len(cont) != 1:
        raise SchemaError(
            "stability_map expects one stability CSV and one contour CSV, "
            f"got headers {sorted(headers.values())}"
        )
    grid = read_stability_csv(stab[0])
    pts = read_contour_csv(cont[0])

    # valid cells only are written, so rebuild the full grid with NaN holes
    V_axis = np.unique(grid["V"])
    s_axis = np.unique(grid["sigma"])
    det = np.full((s_axis.size, V_axis.size), np.nan)
    iv = np.searchsorted(V_axis, grid["V"])
    isig = np.searchsorted(s_axis, grid["sigma"])
    det[isig, iv] = grid["det_g"]

    ax = fig.subplots()
    vmax = float(np.nanmax(np.abs(det)))
    mesh = ax.pcolormesh(V_axis, s_axis, det, cmap="RdBu_r",
                         norm=Normalize(-vmax, vmax), shading="nearest")
    fig.colorbar(mesh, ax=ax, label=r"$\det g$")
    for chain in _split_chains(pts):
        ax.plot(chain[:, 0], chain[:, 1], "k-", lw=1.2)
    ax.set_xlabel("$V$")
    ax.set_ylabel(r"$\sigma$")
    fig.set_size_inches(1.25 * spec.style.width, spec.style.width)
    return fig


def _sweep_bars(spec, fig):
    (src,) = _only_csvs(spec, 1)
    sweep = read_sweep_csv(src)
    cs = sorted(set(sweep["c"]))
    v0s = sorted(set(sweep["V0"]))
    cell = {(c, v): k for k, (c, v) in
            enumerate(zip(sweep["c"], sweep["V0"]))}
    missing = [(c, v) for c in cs for v in v0s if (c, v) not in cell]
    if missing:
        raise SchemaError(f"{src}: sweep grid incomplete, missing {missing}")

    ax_dev, ax_cross = fig.subplots(2, 1, sharex=True)
    xs = np.arange(len(v0s))
    width = 0.8 / len(cs)
    for j, c in enumerate(cs):
        offset = (j - (len(cs) - 1) / 2.0) * width
        dev = [sweep["abs_zeta1_minus_1"][cell[(c, v)]] for v in v0s]
        cross = [sweep["cross_coupling_contrib"][cell[(c, v)]] for v in v0s]
        ax_dev.bar(xs + offset, dev, width, label=f"$c = {c:g}$")
        ax_cross.bar(xs + offset, cross, width)
    ax_dev.set_ylabel(r"$|\zeta_1 - 1|$")
    ax_dev.legend(loc="best", ncols=2)
    ax_cross.set_ylabel(r"$|\zeta_1(c) - \zeta_1(0)|$")
    ax_cross.set_xlabel("$V_0$")
    ax_cross.set_xticks(xs, [f"{v:g}" for v in v0s])
    fig.set_size_inches(spec.style.width, 1.2 * spec.style.width)
    return fig


FIGURE_KINDS = {
    "invariant3panel": _invariant3panel,
    "levelset_fan": _levelset_fan,
    "stability_map": _stability_map,
    "sweep_bars": _sweep_bars,
}


def build_figure(spec: FigureSpec) -> Figure:
    """Assemble the figure in memory without writing it."""
    if spec.kind not in FIGURE_KINDS:
        raise SchemaError(
            f"unknown figure kind {spec.kind!r}; expected one of "
            f"{sorted(FIGURE_KINDS)}"
        )
    if spec.style.fmt not in ("pdf", "png"):
        raise SchemaError(f"unsupported format {spec.style.fmt!r}")
    with mpl.rc_context({**_RC, "font.size": spec.style.font_size}):
        fig = Figure(constrained_layout=True)
        return FIGURE_KINDS[spec.kind](spec, fig)


# metadata stripped per format so repeat renders are byte-identical
_NO_TIMESTAMP = {"pdf": {"CreationDate": None}, "png": {"Software": None}}


def render(spec: FigureSpec) -> str:
    fig = build_figure(spec)
    fmt = spec.style.fmt
    fig.savefig(spec.output, format=fmt, dpi=spec.style.dpi,
                metadata=_NO_TIMESTAMP[fmt])
    return spec.output
