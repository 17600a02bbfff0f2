"""Optional PNG panels for run outputs.

Uses pandas and matplotlib only. Every chart reads the same DataFrame that was
written to CSV, so the figures never carry numbers the CSVs do not.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def _save_plot(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path


def transfer_panel(outdir: Path, ese: pd.DataFrame, dec: pd.DataFrame | None = None, user: int = 1) -> Path:
    """ESE curve (v -> rho) against the DEC target or achieved DEC curve (rho -> v)."""
    fig = plt.figure()
    e = ese[ese["user"] == user]
    plt.plot(e["rho"], e["v"], label="ESE")
    if dec is not None:
        d = dec[dec["user"] == user]
        for col in [c for c in d.columns if c not in ("user", "rho")]:
            plt.plot(d["rho"], d[col], linestyle="--", label=col)
    plt.xscale("log")
    plt.title(f"Transfer curves, user {user}")
    plt.xlabel("rho")
    plt.ylabel("v")
    plt.legend()
    return _save_plot(fig, outdir / f"transfer_user{user}.png")


def trajectory_panel(outdir: Path, traj: pd.DataFrame) -> Path:
    fig = plt.figure()
    for col in [c for c in traj.columns if c.startswith("v_")]:
        plt.semilogy(traj["iter"], traj[col].clip(lower=1e-12), label=col)
    plt.title("MSE trajectory")
    plt.xlabel("Outer iteration")
    plt.ylabel("v")
    plt.legend()
    return _save_plot(fig, outdir / "trajectory.png")


def ber_panel(outdir: Path, ber: pd.DataFrame) -> Path:
    fig = plt.figure()
    for user, grp in ber.groupby("user"):
        grp = grp.sort_values("snr_dB")
        plt.semilogy(grp["snr_dB"], grp["ber"].clip(lower=1e-9), marker="o", label=f"user {user}")
    plt.title("Bit error rate")
    plt.xlabel("SNR_sum (dB)")
    plt.ylabel("BER")
    plt.legend()
    return _save_plot(fig, outdir / "ber.png")


def histogram_panel(outdir: Path, hist: pd.DataFrame) -> Path:
    fig = plt.figure()
    for it, grp in hist.groupby("iter"):
        plt.plot(grp["bin_center"], grp["density"], label=f"iter {it}")
    plt.title("Decoder output LLR density")
    plt.xlabel("LLR")
    plt.ylabel("Density")
    plt.legend()
    return _save_plot(fig, outdir / "llr_hist.png")


def qpsk_sweep_panel(outdir: Path, sweep: pd.DataFrame) -> Path:
    fig = plt.figure()
    for snr, grp in sweep.groupby("snr_dB"):
        plt.plot(grp["K"], grp["sum_rate_bpcu"], marker="o", label=f"{snr:g} dB")
    plt.xscale("log", base=2)
    plt.title("QPSK sum rate vs users")
    plt.xlabel("K")
    plt.ylabel("Sum rate (bpcu)")
    plt.legend()
    return _save_plot(fig, outdir / "qpsk_sweep.png")
