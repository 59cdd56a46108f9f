"""Gnuplot scripts for the figure analogues; rendering is left to gnuplot."""

from __future__ import annotations

import math
from pathlib import Path

ALG_TITLES = {
    "gamp": "Bayesian GAMP",
    "fista": "FISTA",
    "omp": "OMP",
    "biht": "BIHT",
    "glasso": "GLasso",
}

_PREAMBLE = """set datafile separator ','
set datafile missing ''
set terminal pngcairo size 800,600
set output '{png}'
set key top right
set grid
"""


def figure_number(cfg) -> int | None:
    """Figure analogue of a config, or None when no figure applies."""
    if cfg.experiment == "lemma1":
        return 1
    if cfg.experiment == "se_chart":
        return 2 if cfg.channel == "linear" else 5
    if cfg.experiment == "gamp_sweep":
        return 3 if cfg.channel == "linear" else 6
    if cfg.experiment == "convergence":
        return 4
    return None


def _select(column, name):
    return f"(strcol({column}) eq '{name}' ? ${{col}} : NaN)"


def _alg_plots(cfg, x_col, y_col):
    parts = []
    for alg in cfg.algorithms:
        sel = _select(2, alg.name).replace("${col}", f"${y_col}")
        parts.append(f"'summary.csv' using {x_col}:{sel} with linespoints title '{ALG_TITLES[alg.name]}'")
    return parts


def fig1(cfg, info):
    lines = ["set logscale x 2", "set xlabel 'log2 N'", "set ylabel 'expected unnormalized square error'"]
    parts = []
    for v in cfg.v_list:
        sel = f"($1 == {v!r} ? ${{c}} : NaN)"
        parts.append(f"'lemma1.csv' using 2:{sel.replace('${c}', '$4')} with linespoints title 'v = {v:g}'")
        parts.append(f"'lemma1.csv' using 2:{sel.replace('${c}', '$5')} with lines dashtype 2 notitle")
    return lines, parts


def _chart(cfg, info):
    lines = ["set xlabel '2 v_out / delta'", "set ylabel 'v_in'", "set logscale xy"]
    parts = []
    for d in cfg.deltas:
        sel = f"($1 == {d!r} ? ${{c}} : NaN)"
        parts.append(f"'chart.csv' using 2:{sel.replace('${c}', '$4')} with lines title 'outer, delta = {d:g}'")
    parts.append("'chart.csv' using 2:3 with lines lw 2 title 'inner'")
    return lines, parts


def fig3(cfg, info):
    lines = ["set logscale y", "set xlabel 'delta'", "set ylabel 'median unnormalized square error'"]
    weak = info.get("delta_weak")
    if weak is not None and math.isfinite(weak):
        lines.append(f"set arrow from {weak!r}, graph 0 to {weak!r}, graph 1 nohead dashtype 3")
    return lines, _alg_plots(cfg, 1, 6)


def fig4(cfg, info):
    lines = ["set logscale xy", "set xlabel 'iteration'", "set ylabel 'mean unnormalized square error'"]
    return lines, _alg_plots(cfg, "($3 > 0 ? $3 : NaN)", 5)


def fig6(cfg, info):
    lines = ["set logscale y", "set xlabel 'delta'", "set ylabel 'median squared norm of the normalized error'"]
    parts = _alg_plots(cfg, 1, 10)
    parts.append("'se.csv' using 1:2 with lines dashtype 2 title 'state evolution'")
    return lines, parts


_BUILDERS = {1: fig1, 2: _chart, 3: fig3, 4: fig4, 5: _chart, 6: fig6}


def render_script(cfg, info) -> tuple[int, str] | None:
    fig = figure_number(cfg)
    if fig is None:
        return None
    lines, parts = _BUILDERS[fig](cfg, info)
    text = _PREAMBLE.format(png=f"fig{fig}.png") + "\n".join(lines) + "\nplot " + ", \\\n     ".join(parts) + "\n"
    return fig, text


def write_script(cfg, out_dir, info) -> Path | None:
    """Write ``fig<n>.gp`` next to the CSV files; returns its path."""
    rendered = render_script(cfg, info)
    if rendered is None:
        return None
    fig, text = rendered
    path = Path(out_dir) / f"fig{fig}.gp"
    effs = ";".join(repr(float(d)) for d in cfg.delta_effs())
    head = f"# config_hash={cfg.hash()}\n# master_seed={cfg.master_seed}\n# delta_eff={effs}\n"
    path.write_text(head + text, encoding="utf-8")
    return path
