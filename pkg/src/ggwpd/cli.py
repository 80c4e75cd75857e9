"""Command-line driver for the saddle pipeline.

Commands: singmap, foliate, saddles, sweep, wavefn, compare, overlap.
Every command writes deterministic CSV tables (plus optional JSON mirrors
and PNG figures) into the output directory; wall-clock information goes
only to the sidecar run.log. Exit codes: 0 success, 2 configuration or
usage error, 3 numerical failure.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .assembly import (
    assemble_wavefunction,
    lwpd_propagate,
    lwpd_validity_overlap,
    offcenter_sum,
    overlap_semiclassical,
)
from .config import ConfigError, RunConfig, load_config
from .continuation import grid_singularity_map, run_stokes_analysis, sweep_saddles
from .params import WavePacketParams
from .quantum import (
    DomainTooSmallError,
    compare_metrics,
    grid_wavefunction,
    overlap_numeric,
    split_operator_propagate,
)
from .saddles import find_exposed_saddles
from .wigner import (
    UnresolvedFoldError,
    propagate_contour,
    segment_foliations,
    sigma_contour,
    wigner_matrix,
)

_NUMERIC_ERRORS = (UnresolvedFoldError, DomainTooSmallError, RuntimeError, FloatingPointError)


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _common_options(f):
    f = click.option("--config", "config_path", type=click.Path(), default=None, help="INI run configuration.")(f)
    f = click.option("--out", "out_dir", type=click.Path(), default=None, help="Output directory.")(f)
    f = click.option("--threads", type=int, default=None, help="Worker threads for trajectory batches.")(f)
    f = click.option("--t-over-tau", type=float, default=None, help="Propagation time in central periods.")(f)
    f = click.option("--nsigma", type=float, default=None, help="Wigner contour level in sigma.")(f)
    f = click.option("--seed", type=int, default=None, help="Seed for sampling estimators.")(f)
    return f


def _setup(config_path, out_dir, threads, t_over_tau, nsigma, seed) -> RunConfig:
    try:
        cfg = load_config(config_path)
        cfg = cfg.with_overrides(
            {
                ("output", "directory"): out_dir,
                ("time", "t_over_tau"): t_over_tau,
                ("contour", "n_sigma"): nsigma,
                ("sampling", "seed"): seed,
            }
        )
    except ConfigError as exc:
        _fail(2, str(exc))
    if threads is not None:
        import numba

        numba.set_num_threads(max(1, threads))
    cfg.out_dir().mkdir(parents=True, exist_ok=True)
    return cfg


def _log(cfg: RunConfig, command: str, t_start: float, notes: dict):
    with open(cfg.out_dir() / "run.log", "a") as fh:
        stamp = time.strftime("%Y-%m-%dT%H:%M:%S")
        fh.write(f"{stamp} {command} ({time.time() - t_start:.2f}s) {json.dumps(notes)}\n")


def _json_mirror(cfg: RunConfig, name: str, payload):
    if cfg[("output", "json_mirror")]:
        with open(cfg.out_dir() / f"{name}.json", "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)


def _write_csv(path: Path, header: str, rows):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{v:.17g}"
    return str(v)


def _foliate(cfg: RunConfig):
    wp = cfg.packet()
    sys_p = cfg.system()
    wf = wigner_matrix(wp)
    contour = sigma_contour(cfg[("contour", "n_sigma")], cfg[("contour", "n_points")], wf)
    evolved = propagate_contour(contour, cfg.t(), sys_p, cfg.integrator(), wp=wp)
    return segment_foliations(evolved)


def _write_contour_tables(cfg: RunConfig, fols):
    from .plots import _labels_per_sample

    ev = fols.evolved
    labels = _labels_per_sample(fols)
    rows = zip(ev.theta, ev.contour.q0, ev.contour.p0, ev.qt, ev.pt, labels)
    _write_csv(cfg.out_dir() / "contour.csv", "theta,q0,p0,q_t,p_t,foliation", rows)
    piece_rows = []
    for fol in fols.foliations:
        for k, piece in enumerate(fol.pieces):
            piece_rows.append(
                (fol.label, k, piece.theta_lo, piece.theta_hi, piece.rising,
                 piece.e_lo, piece.e_hi, piece.qt_lo, piece.qt_hi)
            )
    _write_csv(
        cfg.out_dir() / "foliations.csv",
        "label,piece,theta_lo,theta_hi,rising,e_lo,e_hi,qt_lo,qt_hi",
        piece_rows,
    )


def _write_saddle_table(cfg: RunConfig, saddles, name="saddles"):
    rows = []
    for s in saddles:
        rows.append(
            (
                s.foliation_label if s.foliation_label is not None else -1,
                s.u0.real, s.u0.imag, s.start.p.real, s.start.p.imag,
                s.action.real, s.action.imag,
                s.action_like.real, s.action_like.imag,
                s.theta, s.exposure, s.stokes_excluded,
            )
        )
    _write_csv(
        cfg.out_dir() / f"{name}.csv",
        "foliation,re_u0,im_u0,re_p0,im_p0,re_action,im_action,re_phi,im_phi,theta,exposure,stokes_excluded",
        rows,
    )
    _json_mirror(
        cfg,
        name,
        [
            {
                "foliation": s.foliation_label,
                "u0": [s.u0.real, s.u0.imag],
                "p0": [s.start.p.real, s.start.p.imag],
                "action": [s.action.real, s.action.imag],
                "phi": [s.action_like.real, s.action_like.imag],
                "exposure": s.exposure,
                "stokes_excluded": s.stokes_excluded,
            }
            for s in saddles
        ],
    )


def _run_sweep(cfg: RunConfig, fols, x_grid):
    wp = cfg.packet()
    sys_p = cfg.system()
    anchors, failures = find_exposed_saddles(
        fols, 0.0, cfg.t(), wp, sys_p, cfg.integrator(), cfg.newton()
    )
    if failures:
        click.echo(f"note: {len(failures)} anchor seed(s) diverged: {failures}", err=True)
    families = sweep_saddles(
        anchors,
        fols,
        x_grid,
        cfg.t(),
        wp,
        sys_p,
        cfg.integrator(),
        cfg.newton(),
        exposure_seeds=cfg[("sweep", "exposure_seeds")],
    )
    decisions = run_stokes_analysis(
        families, gap_max=cfg[("sweep", "gap_max")], flip_window=cfg[("sweep", "flip_window")]
    )
    return anchors, families, decisions


def _write_family_tables(cfg: RunConfig, families, decisions):
    rows = []
    for fam in families:
        for x in fam.xs:
            s = fam.samples[x]
            rows.append(
                (s.x, fam.label, s.u0.real, s.u0.imag, s.action_like.real, s.action_like.imag,
                 s.exposed, s.stokes_excluded, s.hidden_validated)
            )
    rows.sort(key=lambda r: (r[0], r[1]))
    _write_csv(
        cfg.out_dir() / "families.csv",
        "x,family,re_u0,im_u0,re_phi,im_phi,exposed,stokes_excluded,hidden_validated",
        rows,
    )
    _write_csv(
        cfg.out_dir() / "caustics.csv",
        "resolved,x_caustic,gap,forbidden_direction,x_cross,kept_family,excluded_family",
        [
            (d.resolved, d.x_c, d.gap, d.forbidden_direction,
             d.x_cross if d.x_cross is not None else float("nan"),
             d.kept_label if d.kept_label is not None else -1,
             d.excluded_label if d.excluded_label is not None else -1)
            for d in decisions
        ],
    )


def _write_wavefunction_table(cfg: RunConfig, table, name="wavefunction_sc"):
    labels = sorted(table.per_family.keys())
    header = "x,re_psi,im_psi,abs_psi,log10_abs" + "".join(f",abs_f{k}" for k in labels)
    rows = []
    for i, x in enumerate(table.x):
        mag = abs(table.psi[i])
        row = [x, table.psi[i].real, table.psi[i].imag, mag, np.log10(mag) if mag > 0 else float("-inf")]
        for k in labels:
            v = table.per_family[k][i]
            row.append(abs(v) if np.isfinite(v.real) else float("nan"))
        rows.append(row)
    _write_csv(cfg.out_dir() / f"{name}.csv", header, rows)


@click.group()
@click.version_option(version=__version__, prog_name="ggwpd")
def main():
    """Semiclassical wave packet dynamics for the quartic oscillator."""


@main.command()
@_common_options
def singmap(**kw):
    """Raster map of singular trajectories over manifold initial conditions."""
    cfg = _setup(**kw)
    t0 = time.time()
    try:
        smap = grid_singularity_map(
            cfg.packet(),
            cfg.system(),
            cfg.t(),
            re_range=(cfg[("map", "re_min")], cfg[("map", "re_max")]),
            im_range=(cfg[("map", "im_min")], cfg[("map", "im_max")]),
            resolution=(cfg[("map", "n_re")], cfg[("map", "n_im")]),
            opts=cfg.integrator(),
        )
    except ValueError as exc:
        _fail(2, str(exc))
    except _NUMERIC_ERRORS as exc:
        _fail(3, str(exc))
    out = cfg.out_dir()
    _write_pgm(out / "singmap.pgm", smap)
    _write_csv(
        out / "singmap_meta.csv",
        "t,re_min,re_max,im_min,im_max,n_re,n_im,n_singular",
        [
            (smap.t, smap.re_grid[0], smap.re_grid[-1], smap.im_grid[0], smap.im_grid[-1],
             len(smap.re_grid), len(smap.im_grid), smap.n_singular)
        ],
    )
    if cfg[("output", "figures")]:
        from .plots import figure_singularity_map

        figure_singularity_map(smap, out / "singmap.png")
    _log(cfg, "singmap", t0, {"n_singular": smap.n_singular})
    click.echo(f"singular cells: {smap.n_singular} of {smap.status.size}")


def _write_pgm(path, smap):
    """8-bit portable graymap: 0 = singular, 1..255 = scaled Re x_t."""
    vals = smap.re_xt.copy()
    ok = smap.status == 0
    lo = np.nanmin(vals[ok]) if ok.any() else 0.0
    hi = np.nanmax(vals[ok]) if ok.any() else 1.0
    span = hi - lo if hi > lo else 1.0
    img = np.zeros(vals.shape, dtype=np.uint8)
    img[ok] = 1 + np.clip(254 * (vals[ok] - lo) / span, 0, 254).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n# t={smap.t:.12g} lo={lo:.12g} hi={hi:.12g}\n".encode())
        fh.write(f"{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img[::-1].tobytes())  # top row = largest Im u0


@main.command()
@_common_options
def foliate(**kw):
    """Propagate the Wigner contour and segment it into transport pathways."""
    cfg = _setup(**kw)
    t0 = time.time()
    try:
        fols = _foliate(cfg)
    except _NUMERIC_ERRORS as exc:
        _fail(3, str(exc))
    _write_contour_tables(cfg, fols)
    if cfg[("output", "figures")]:
        from .plots import figure_foliations

        figure_foliations(fols, cfg.out_dir() / "foliations.png")
    _log(cfg, "foliate", t0, {"n_foliations": len(fols)})
    click.echo(f"foliations: {len(fols)}")


@main.command()
@_common_options
@click.option("--x", "x_target", type=float, default=0.0, show_default=True,
              help="Final position of the wave function boundary value problem.")
def saddles(x_target, **kw):
    """Locate the exposed saddles contributing at one final position."""
    cfg = _setup(**kw)
    t0 = time.time()
    try:
        fols = _foliate(cfg)
        found, failures = find_exposed_saddles(
            fols, x_target, cfg.t(), cfg.packet(), cfg.system(), cfg.integrator(), cfg.newton()
        )
    except _NUMERIC_ERRORS as exc:
        _fail(3, str(exc))
    _write_saddle_table(cfg, found)
    if failures:
        click.echo(f"diverged foliations: {failures}", err=True)
    if cfg[("output", "figures")]:
        from .plots import figure_saddles

        figure_saddles(found, cfg.out_dir() / "saddles.png", title=f"x = {x_target}")
    _log(cfg, "saddles", t0, {"x": x_target, "n_saddles": len(found)})
    click.echo(f"saddles at x={x_target}: {len(found)}")


@main.command()
@_common_options
@click.option("--x-range", nargs=2, type=float, default=None,
              help="Override the sweep range (min max); grid dx comes from the config.")
def sweep(x_range, **kw):
    """Continue the anchor saddles over final position; detect caustics and Stokes lines."""
    cfg = _setup(**kw)
    if x_range is not None:
        lo, hi = sorted(x_range)
        cfg = cfg.with_overrides({("grid", "x_min"): lo, ("grid", "x_max"): hi})
    t0 = time.time()
    try:
        fols = _foliate(cfg)
        anchors, families, decisions = _run_sweep(cfg, fols, cfg.x_grid())
    except _NUMERIC_ERRORS as exc:
        _fail(3, str(exc))
    _write_contour_tables(cfg, fols)
    _write_saddle_table(cfg, anchors, name="anchors")
    _write_family_tables(cfg, families, decisions)
    if cfg[("output", "figures")]:
        from .plots import figure_families

        table = assemble_wavefunction(families, cfg.packet())
        figure_families(families, cfg.out_dir() / "families.png", table=table)
    _log(cfg, "sweep", t0, {"n_families": len(families), "n_caustics": len(decisions)})
    resolved = sum(1 for d in decisions if d.resolved)
    click.echo(f"families: {len(families)}, caustics: {len(decisions)} ({resolved} resolved)")


@main.command()
@_common_options
def wavefn(**kw):
    """Assemble the semiclassical wave function over the position grid."""
    cfg = _setup(**kw)
    t0 = time.time()
    try:
        fols = _foliate(cfg)
        anchors, families, decisions = _run_sweep(cfg, fols, cfg.x_grid())
    except _NUMERIC_ERRORS as exc:
        _fail(3, str(exc))
    table = assemble_wavefunction(families, cfg.packet())
    _write_family_tables(cfg, families, decisions)
    _write_wavefunction_table(cfg, table)
    if cfg[("output", "figures")]:
        from .plots import figure_wavefunction

        figure_wavefunction(table, cfg.out_dir() / "wavefunction.png")
    _log(cfg, "wavefn", t0, {"n_x": len(table.x), "dropped": table.n_dropped_unvalidated})
    click.echo(f"wavefunction on {len(table.x)} positions; "
               f"unvalidated hidden samples dropped: {table.n_dropped_unvalidated}")


@main.command()
@_common_options
def compare(**kw):
    """Run quantum reference, saddle sum, linearized, and off-center methods; report metrics."""
    cfg = _setup(**kw)
    t0 = time.time()
    wp = cfg.packet()
    sys_p = cfg.system()
    try:
        fols = _foliate(cfg)
        anchors, families, decisions = _run_sweep(cfg, fols, cfg.x_grid())
        table = assemble_wavefunction(families, wp)
        psi0 = grid_wavefunction(
            wp, cfg[("quantum", "x_min")], cfg[("quantum", "x_max")], cfg[("quantum", "n_points")]
        )
        psi_q = split_operator_propagate(
            psi0, cfg.t(), cfg[("quantum", "dt")], sys_p, order=cfg[("quantum", "order")]
        )
        gauss = lwpd_propagate(wp, cfg.t(), sys_p, cfg.integrator())
        validity = lwpd_validity_overlap(
            wp, cfg.t(), sys_p, cfg.integrator(),
            n_samples=cfg[("sampling", "n_samples")], seed=cfg[("sampling", "seed")],
        )
        oc = offcenter_sum(fols, table.x, cfg.t(), wp, sys_p, cfg.integrator())
    except _NUMERIC_ERRORS as exc:
        _fail(3, str(exc))
    caustic_xs = [d.x_c for d in decisions if d.resolved]
    report = compare_metrics(table.x, table.psi, psi_q, caustic_positions=caustic_xs)
    out = cfg.out_dir()
    _write_family_tables(cfg, families, decisions)
    _write_wavefunction_table(cfg, table)
    psi_q_i = psi_q.interp(table.x)
    lw = gauss.eval(table.x)
    _write_csv(
        out / "comparison.csv",
        "x,re_psi_sc,im_psi_sc,re_psi_q,im_psi_q,abs_lwpd,abs_offcenter",
        zip(table.x, table.psi.real, table.psi.imag, psi_q_i.real, psi_q_i.imag,
            np.abs(lw), np.abs(oc.psi)),
    )
    _write_csv(
        out / "lwpd.csv",
        "q_center,p_center,re_width,im_width,re_phase_norm,im_phase_norm,validity_overlap",
        [(gauss.q_c, gauss.p_c, gauss.width_t.real, gauss.width_t.imag,
          gauss.phase_norm.real, gauss.phase_norm.imag, validity)],
    )
    with open(out / "report.txt", "w") as fh:
        fh.write(report.as_text() + "\n")
        fh.write(f"linearized validity overlap : {validity:.6f}\n")
        fh.write(f"dropped unvalidated hidden  : {table.n_dropped_unvalidated}\n")
    if cfg[("output", "figures")]:
        from .plots import figure_families, figure_wavefunction

        figure_wavefunction(table, out / "comparison.png", psi_q=psi_q, lwpd=lw, offcenter=oc.psi)
        figure_families(families, out / "families.png", table=table)
    _log(cfg, "compare", t0, {"central_l2": report.central_l2, "tail_log_max": report.tail_log_max})
    click.echo(report.as_text())
    click.echo(f"linearized validity overlap : {validity:.6f}")


@main.command()
@_common_options
@click.option("--beta-q", type=float, default=None, help="Bra packet center position (default: ket's).")
@click.option("--beta-p", type=float, default=None, help="Bra packet center momentum (default: ket's).")
@click.option("--beta-width-re", type=float, default=None, help="Bra packet width, real part.")
@click.option("--beta-width-im", type=float, default=0.0, show_default=True, help="Bra packet width, imaginary part.")
def overlap(beta_q, beta_p, beta_width_re, beta_width_im, **kw):
    """Semiclassical and quantum transport coefficient <phi_b | phi_a(t)>."""
    cfg = _setup(**kw)
    t0 = time.time()
    wp = cfg.packet()
    sys_p = cfg.system()
    wp_bra = WavePacketParams(
        q_center=beta_q if beta_q is not None else wp.q_center,
        p_center=beta_p if beta_p is not None else wp.p_center,
        width=complex(beta_width_re if beta_width_re is not None else complex(wp.width).real,
                      beta_width_im),
        hbar=wp.hbar,
    )
    try:
        fols = _foliate(cfg)
        a_sc, sads, contribs = overlap_semiclassical(
            wp_bra, fols, cfg.t(), wp, sys_p, cfg.integrator(), cfg.newton()
        )
        psi0 = grid_wavefunction(
            wp, cfg[("quantum", "x_min")], cfg[("quantum", "x_max")], cfg[("quantum", "n_points")]
        )
        psi_q = split_operator_propagate(
            psi0, cfg.t(), cfg[("quantum", "dt")], sys_p, order=cfg[("quantum", "order")]
        )
        bra_grid = grid_wavefunction(
            wp_bra, cfg[("quantum", "x_min")], cfg[("quantum", "x_max")], cfg[("quantum", "n_points")]
        )
        a_q = overlap_numeric(bra_grid, psi_q)
    except _NUMERIC_ERRORS as exc:
        _fail(3, str(exc))
    _write_saddle_table(cfg, sads, name="overlap_saddles")
    _write_csv(
        cfg.out_dir() / "overlap.csv",
        "re_sc,im_sc,abs_sc,re_quantum,im_quantum,abs_quantum,n_saddles",
        [(a_sc.real, a_sc.imag, abs(a_sc), a_q.real, a_q.imag, abs(a_q), len(sads))],
    )
    _log(cfg, "overlap", t0, {"abs_sc": abs(a_sc), "abs_q": abs(a_q)})
    click.echo(f"semiclassical: {a_sc:.6g}   quantum: {a_q:.6g}   "
               f"|ratio|: {abs(a_sc)/abs(a_q):.4f}" if abs(a_q) > 0 else f"semiclassical: {a_sc:.6g}")


if __name__ == "__main__":
    main()
