"""Static figure rendering for the pipeline outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import numpy as np
import matplotlib.pyplot as plt

__all__ = [
    "figure_singularity_map",
    "figure_foliations",
    "figure_saddles",
    "figure_families",
    "figure_wavefunction",
]


def figure_singularity_map(smap, path):
    fig, ax = plt.subplots(figsize=(7.2, 3.6), constrained_layout=True)
    shown = np.ma.masked_where(smap.status != 0, smap.re_xt)
    extent = [smap.re_grid[0], smap.re_grid[-1], smap.im_grid[0], smap.im_grid[-1]]
    im = ax.imshow(shown, origin="lower", extent=extent, aspect="auto", cmap="viridis")
    ax.imshow(
        np.ma.masked_where(smap.status == 0, np.ones_like(smap.re_xt)),
        origin="lower",
        extent=extent,
        aspect="auto",
        cmap="gray_r",
        vmin=0,
        vmax=1,
    )
    fig.colorbar(im, ax=ax, label=r"Re $x_t$")
    ax.set_xlabel(r"Re $u_0$")
    ax.set_ylabel(r"Im $u_0$")
    ax.set_title(f"final-position map, t = {smap.t:.4f} (dark: singular)")
    fig.savefig(path, dpi=160)
    plt.close(fig)


def figure_foliations(fols, path, saddles=None):
    ev = fols.evolved
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9.6, 4.2), constrained_layout=True)
    ax0.plot(ev.contour.q0, ev.contour.p0, "k-", lw=0.8)
    ax0.set_xlabel("q")
    ax0.set_ylabel("p")
    ax0.set_title("initial contour")
    cmap = plt.get_cmap("tab20")
    labels = _labels_per_sample(fols)
    for lab in sorted(set(labels)):
        sel = labels == lab
        ax1.plot(ev.qt[sel], ev.pt[sel], ".", ms=1.5, color=cmap((lab - 1) % 20), label=str(lab))
    if saddles is not None:
        for s in saddles:
            ax1.plot(s.traj.final.q.real, s.traj.final.p.real, "ko", ms=4)
    ax1.set_xlabel("q")
    ax1.set_ylabel("p")
    ax1.set_title(f"evolved contour, {len(fols)} foliations")
    ax1.legend(fontsize=6, ncols=2, title="foliation")
    fig.savefig(path, dpi=160)
    plt.close(fig)


def _labels_per_sample(fols):
    ev = fols.evolved
    theta = ev.theta
    two_pi = 2.0 * np.pi
    labels = np.zeros(len(theta), dtype=int)
    for fol in fols.foliations:
        for piece in fol.pieces:
            lo, hi = piece.theta_lo % two_pi, piece.theta_hi % two_pi
            if lo <= hi:
                sel = (theta >= lo) & (theta <= hi)
            else:
                sel = (theta >= lo) | (theta <= hi)
            labels[sel] = fol.label
    return labels


def figure_saddles(saddles, path, title=""):
    fig, ax = plt.subplots(figsize=(6.4, 4.2), constrained_layout=True)
    for s in saddles:
        color = "tab:blue" if s.exposure == "exposed" else "tab:red"
        ax.plot(s.u0.real, s.u0.imag, "o", color=color, ms=5)
        if s.foliation_label is not None:
            ax.annotate(str(s.foliation_label), (s.u0.real, s.u0.imag), fontsize=7,
                        textcoords="offset points", xytext=(4, 2))
    ax.set_xlabel(r"Re $u_0$")
    ax.set_ylabel(r"Im $u_0$")
    ax.set_title(title or "saddle initial conditions (blue: exposed, red: hidden)")
    fig.savefig(path, dpi=160)
    plt.close(fig)


def figure_families(families, path, table=None):
    fig, axes = plt.subplots(3, 1, figsize=(7.2, 8.4), sharex=True, constrained_layout=True)
    cmap = plt.get_cmap("tab20")
    if table is not None:
        mag = np.abs(table.psi)
        pos = mag > 0
        axes[0].plot(table.x[pos], np.log10(mag[pos]), "k-", lw=1.0)
        axes[0].set_ylabel(r"$\log_{10} |\psi_{sc}|$")
    for fam in families:
        xs = fam.xs
        color = cmap((fam.label - 1) % 20)
        re = np.array([fam.samples[x].action_like.real for x in xs])
        im = np.array([fam.samples[x].action_like.imag for x in xs])
        exposed = np.array([fam.samples[x].exposed for x in xs])
        excluded = np.array([fam.samples[x].stokes_excluded for x in xs])
        for panel, vals in ((axes[1], re), (axes[2], im)):
            for style, mask in (("-", exposed), (":", ~exposed & ~excluded), ("--", excluded)):
                masked = np.where(mask, vals, np.nan)
                panel.plot(xs, masked, style, color=color, lw=1.0,
                           label=str(fam.label) if style == "-" and panel is axes[1] else None)
    axes[1].set_ylabel(r"Re $\Phi$")
    axes[2].set_ylabel(r"Im $\Phi$")
    axes[2].set_xlabel("x")
    axes[1].legend(fontsize=6, ncols=4, title="family")
    axes[0].set_title("solid: exposed, dotted: hidden kept, dashed: excluded")
    fig.savefig(path, dpi=160)
    plt.close(fig)


def figure_wavefunction(table, path, psi_q=None, lwpd=None, offcenter=None):
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7.2, 6.4), sharex=True, constrained_layout=True)
    mag = np.abs(table.psi)
    if psi_q is not None:
        aq = np.abs(psi_q.interp(table.x))
        ax0.plot(table.x, aq, "k-", lw=1.4, label="quantum")
        qpos = aq > 0
        ax1.plot(table.x[qpos], np.log10(aq[qpos]), "k-", lw=1.4)
    ax0.plot(table.x, mag, "r--", lw=1.0, label="saddle sum")
    pos = mag > 0
    ax1.plot(table.x[pos], np.log10(mag[pos]), "r--", lw=1.0)
    if lwpd is not None:
        ax0.plot(table.x, np.abs(lwpd), "b:", lw=1.0, label="linearized")
    if offcenter is not None:
        ax0.plot(table.x, np.abs(offcenter), "g-.", lw=1.0, label="off-center")
    ax0.set_ylabel(r"$|\psi|$")
    ax0.legend(fontsize=8)
    ax1.set_ylabel(r"$\log_{10}|\psi|$")
    ax1.set_xlabel("x")
    ax1.set_ylim(bottom=max(-14.0, float(np.log10(mag[pos].min())) - 1.0) if pos.any() else -14.0)
    fig.savefig(path, dpi=160)
    plt.close(fig)
