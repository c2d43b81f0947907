"""Density slices as PPM heatmaps and matplotlib figures."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np


def theta_slice_points(theta: float, extent: float, size: int):
    """Pixel grid over (x, y) in [-extent, extent]^2 on the cone of polar angle ``theta``.

    A pixel at cylindrical radius rho maps to r = rho / sin(theta) and
    azimuth atan2(y, x). Returns (x, y, r, phi) with shape (size, size);
    rows run from +y (top) to -y.
    """
    if not (0 < theta < math.pi):
        raise ValueError("theta must lie strictly between 0 and pi")
    if size < 2 or extent <= 0:
        raise ValueError("need size >= 2 and a positive extent")
    ax = np.linspace(-extent, extent, size)
    x, y = np.meshgrid(ax, ax[::-1])
    rho = np.hypot(x, y)
    return x, y, rho / math.sin(theta), np.arctan2(y, x)


def to_gray(values: np.ndarray, log: bool = False, decades: float = 6.0) -> np.ndarray:
    """Map non-negative values to 0..255, linearly or over ``decades`` of log scale."""
    v = np.clip(np.asarray(values, dtype=float), 0.0, None)
    vmax = v.max()
    if vmax <= 0:
        return np.zeros(v.shape, dtype=np.uint8)
    if log:
        floor = vmax * 10.0 ** (-decades)
        s = (np.log10(np.maximum(v, floor)) - math.log10(floor)) / decades
    else:
        s = v / vmax
    return np.round(255.0 * s).astype(np.uint8)


def write_ppm(path, gray: np.ndarray) -> None:
    """Binary (P6) PPM with equal RGB channels."""
    gray = np.asarray(gray, dtype=np.uint8)
    if gray.ndim != 2:
        raise ValueError("expected a 2-D array")
    h, w = gray.shape
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a P6 file written by ``write_ppm``; returns the (h, w, 3) array."""
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError("only 8-bit PPM is supported")
    data = np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8)
    return data.reshape(h, w, 3)


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_theta_slices(path, slices: dict, extent: float, title: str = "") -> None:
    """Contour panels: one row per theta, one column per pair.

    ``slices`` maps theta (radians) to an array of shape (n_pairs, size, size).
    """
    plt = _pyplot()
    thetas = sorted(slices)
    n_pairs = slices[thetas[0]].shape[0]
    fig, axes = plt.subplots(len(thetas), n_pairs, figsize=(3.2 * n_pairs, 3.0 * len(thetas)), squeeze=False)
    for i, th in enumerate(thetas):
        for k in range(n_pairs):
            ax = axes[i][k]
            img = slices[th][k]
            cs = ax.imshow(img, extent=(-extent, extent, -extent, extent), origin="upper", cmap="viridis")
            fig.colorbar(cs, ax=ax, fraction=0.046, pad=0.04)
            ax.set_title(f"pair {k + 1}, theta={math.degrees(th):.0f} deg", fontsize=8)
            ax.set_xlabel("x (bohr)", fontsize=7)
            ax.set_ylabel("y (bohr)", fontsize=7)
            ax.tick_params(labelsize=6)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_radial(path, r: np.ndarray, pair_profiles: np.ndarray, title: str = "") -> None:
    """Spherically averaged 4 pi r^2 n(r) per pair and in total."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for k, prof in enumerate(pair_profiles):
        ax.plot(r, prof, label=f"pair {k + 1}")
    ax.plot(r, pair_profiles.sum(axis=0), "k--", lw=1, label="total")
    ax.set_xscale("log")
    ax.set_xlabel("r (bohr)")
    ax.set_ylabel("4 pi r^2 n(r)")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_convergence(path, trace, title: str = "") -> None:
    plt = _pyplot()
    it = [t[0] for t in trace]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    a1.semilogy(it, [t[1] for t in trace])
    a1.set_xlabel("iteration")
    a1.set_ylabel("max |density update|")
    F = np.array([t[2] for t in trace])
    a2.plot(it, F - F[-1] if len(F) else F)
    a2.set_yscale("symlog", linthresh=1e-8)
    a2.set_xlabel("iteration")
    a2.set_ylabel("F - F_final (Hartree)")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
