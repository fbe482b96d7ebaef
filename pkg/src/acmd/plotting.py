"""Figure files (PNG) with a CSV of the plotted data next to each one."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import HD_FEC_THRESHOLD, SD_FEC_THRESHOLD, EyeData, PsdEstimate, write_csv  # noqa: E402

__all__ = ["plot_psd", "plot_eye", "plot_pdf", "plot_ber_curve", "ber_curve_table"]

_STAGES = (("pnle", "PNLE"), ("pnle_dfe", "PNLE & DFE"), ("acmd", "ACMD"))


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_psd(psd: PsdEstimate, path, title: str = "", nulls_hz=None) -> tuple[Path, Path]:
    path = Path(path)
    f = psd.frequencies_hz / 1e9
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(f, psd.power_db, lw=0.8)
    if nulls_hz is not None:
        for fn in np.atleast_1d(nulls_hz):
            ax.axvline(fn / 1e9, color="0.6", ls=":", lw=0.7)
    ax.set_xlabel("Frequency (GHz)")
    ax.set_ylabel("PSD (dB/Hz)")
    ax.set_xlim(max(f.min(), 0), f.max())
    ax.set_title(title)
    ax.grid(alpha=0.3)
    png = _save(fig, path.with_suffix(".png"))
    csv = write_csv(path.with_suffix(".csv"), ["frequency_hz", "power_db"], [psd.frequencies_hz, psd.power_db])
    return png, csv


def plot_eye(eye: EyeData, path, title: str = "") -> tuple[Path, Path]:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ext = [eye.time_edges[0], eye.time_edges[-1], eye.amplitude_edges[0], eye.amplitude_edges[-1]]
    ax.imshow(np.log1p(eye.eye_counts.T), origin="lower", aspect="auto", extent=ext, cmap="magma")
    ax.set_xlabel("Time (symbols)")
    ax.set_ylabel("Amplitude")
    ax.set_title(title)
    png = _save(fig, path.with_suffix(".png"))
    t = 0.5 * (eye.time_edges[1:] + eye.time_edges[:-1])
    tt, aa = np.meshgrid(t, eye.amplitude_centres, indexing="ij")
    csv = write_csv(path.with_suffix(".csv"), ["time_symbols", "amplitude", "count"],
                    [tt, aa, eye.eye_counts.astype(np.int64)])
    return png, csv


def plot_pdf(eye: EyeData, path, title: str = "") -> tuple[Path, Path]:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(4.5, 3.0))
    ax.plot(eye.amplitude_centres, eye.pdf)
    ax.set_xlabel("Amplitude")
    ax.set_ylabel("PDF")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    png = _save(fig, path.with_suffix(".png"))
    csv = write_csv(path.with_suffix(".csv"), ["amplitude", "pdf", "mass"], [eye.amplitude_centres, eye.pdf, eye.mass])
    return png, csv


def ber_curve_table(records, variable: str):
    """Mean BER per sweep value and stage (errors pooled over trials)."""
    pooled = defaultdict(lambda: defaultdict(lambda: [0, 0]))
    for r in records:
        sw = r.get("sweep")
        if not sw or sw["variable"] != variable or r.get("status") != "ok":
            continue
        for key, _ in _STAGES:
            b = r["ber"].get(key)
            if b:
                acc = pooled[sw["value"]][key]
                acc[0] += b["bit_errors"]
                acc[1] += b["bits_compared"]
    xs = sorted(pooled)
    cols = {key: np.array([pooled[x][key][0] / pooled[x][key][1] if pooled[x][key][1] else np.nan for x in xs])
            for key, _ in _STAGES}
    return np.array(xs, dtype=float), cols


def plot_ber_curve(records, variable: str, path, title: str = "") -> tuple[Path, Path]:
    path = Path(path)
    x, cols = ber_curve_table(records, variable)
    if x.size == 0:
        raise ValueError(f"no successful sweep records over {variable!r}")
    fig, ax = plt.subplots(figsize=(5, 3.8))
    for (key, label), marker in zip(_STAGES, "os^"):
        y = cols[key]
        ok = np.isfinite(y) & (y > 0)
        if np.any(ok):
            ax.semilogy(x[ok], y[ok], marker=marker, label=label)
    ax.axhline(HD_FEC_THRESHOLD, color="k", ls="--", lw=0.8, label="7% HD-FEC")
    ax.axhline(SD_FEC_THRESHOLD, color="0.5", ls="--", lw=0.8, label="9% SD-FEC")
    ax.set_xlabel({"rop_dbm": "ROP (dBm)", "mlse_memory": "Memory length P", "pf_taps": "PF taps"}.get(variable, variable))
    ax.set_ylabel("BER")
    ax.set_title(title)
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=8)
    png = _save(fig, path.with_suffix(".png"))
    csv = write_csv(path.with_suffix(".csv"), [variable] + [k for k, _ in _STAGES], [x] + [cols[k] for k, _ in _STAGES])
    return png, csv
