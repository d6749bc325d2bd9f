"""Figures written next to the CSV outputs, plus a text preview."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SHADES = " .:-=+*#%@"


def ascii_heatmap(values, width=64, height=24):
    """Coarse character rendering of a real 2D array (rows = first axis).

    The first axis runs upward, so the low-frequency corner is bottom left.
    """
    v = np.asarray(values, dtype=float)
    ri = np.linspace(0, v.shape[0] - 1, height).round().astype(int)
    ci = np.linspace(0, v.shape[1] - 1, width).round().astype(int)
    sub = np.abs(v[np.ix_(ri, ci)])
    top = sub.max()
    if top == 0:
        idx = np.zeros_like(sub, dtype=int)
    else:
        idx = np.minimum((sub / top * (len(_SHADES) - 1)).round().astype(int), len(_SHADES) - 1)
    lines = ["".join(_SHADES[i] for i in row) for row in idx[::-1]]
    return "\n".join(lines)


def plot_spectrum(spec, path, centers=None):
    """Real and imaginary parts of one spectrum side by side."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.4), constrained_layout=True)
    ext = [spec.omega_t[0], spec.omega_t[-1], spec.omega_tau[0], spec.omega_tau[-1]]
    for ax, part, title in zip(axes, (spec.values.real, spec.values.imag), ("Re", "Im")):
        lim = np.max(np.abs(part)) or 1.0
        im = ax.imshow(part, origin="lower", extent=ext, cmap="RdBu_r", vmin=-lim, vmax=lim,
                       aspect="auto")
        ax.set_xlabel(r"$\omega_t$ (cm$^{-1}$)")
        ax.set_ylabel(r"$\omega_\tau$ (cm$^{-1}$)")
        ax.set_title(f"{title}  {spec.config}  T = {spec.T:g} fs")
        if centers is not None:
            for c in centers:
                ax.axhline(c, color="k", lw=0.4, ls=":")
                ax.axvline(c, color="k", lw=0.4, ls=":")
        fig.colorbar(im, ax=ax, shrink=0.85)
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_kappa(phi, kappa, path, threshold=15.0):
    fig, ax = plt.subplots(figsize=(6, 4), constrained_layout=True)
    k = np.where(np.isfinite(kappa), kappa, np.nan)
    ax.semilogy(np.asarray(phi) / np.pi, k, color="tab:red", label=r"$\kappa(\phi)$")
    ax.axhline(threshold, color="tab:blue", label=f"threshold {threshold:g}")
    ax.set_xlabel(r"$\phi/\pi$")
    ax.set_ylabel("condition number")
    ax.legend()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_chi_traces(chi_ref, path, chi_rec=None, labels=("aaaa", "bbaa", "bbbb", "aabb", "abab")):
    """Population, transfer and coherence elements against waiting time."""
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.8), constrained_layout=True)
    groups = [
        [lb for lb in labels if lb in ("aaaa", "bbbb")],
        [lb for lb in labels if lb in ("bbaa", "aabb")],
        [lb for lb in labels if lb[0] != lb[1]],
    ]
    titles = ("populations", "transfer", "coherence")
    for ax, group, title in zip(axes, groups, titles):
        for lb in group:
            ref = chi_ref[lb]
            parts = [("Re", ref.real)] + ([("Im", ref.imag)] if lb[0] != lb[1] else [])
            for tag, y in parts:
                line, = ax.plot(chi_ref.times, y, label=f"{tag} {lb}")
                if chi_rec is not None:
                    rec = chi_rec[lb]
                    yr = rec.real if tag == "Re" else rec.imag
                    ax.plot(chi_rec.times, yr, "o", color=line.get_color(), ms=4)
        ax.set_title(title)
        ax.set_xlabel("T (fs)")
        ax.legend(fontsize=8)
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_amplitudes(peaks, path):
    """Real and imaginary parts of the four peak amplitudes."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.8), constrained_layout=True)
    for key in ("aa", "ab", "ba", "bb"):
        s = peaks[key]
        axes[0].plot(peaks.times, s.real, "o-", label=f"S_{key}")
        axes[1].plot(peaks.times, s.imag, "o-", label=f"S_{key}")
    for ax, title in zip(axes, ("Re", "Im")):
        ax.set_title(f"{title}  {peaks.config}")
        ax.set_xlabel("T (fs)")
        ax.legend(fontsize=8)
    fig.savefig(path, dpi=110)
    plt.close(fig)
