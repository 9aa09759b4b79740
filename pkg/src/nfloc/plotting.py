"""Figure rendering for the report-producing subcommands.

Every figure lands next to its CSV. PNGs are written without the producer
metadata entry so a re-run with the same library version is byte-identical.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_SAVE_KW = dict(dpi=110, metadata={"Software": None})


def _finite_snr(rows, key="snr_db"):
    return [r for r in rows if math.isfinite(r[key])]


def sweep_figure(rows: list[dict], path) -> None:
    """RMSE vs SNR, angle and range panels, one line per method/T, CRLB dashed."""
    rows = _finite_snr(rows)
    fig, (ax_t, ax_r) = plt.subplots(1, 2, figsize=(9.6, 4.0))
    series = sorted({(r["method"], r["snapshots"]) for r in rows})
    multi_t = len({t for _, t in series}) > 1
    for method, T in series:
        sel = [r for r in rows if r["method"] == method and r["snapshots"] == T]
        sel.sort(key=lambda r: r["snr_db"])
        label = f"{method} (T={T})" if multi_t else method
        ax_t.semilogy([r["snr_db"] for r in sel], [r["rmse_theta_deg"] for r in sel],
                      marker="o", label=label)
        ax_r.semilogy([r["snr_db"] for r in sel], [r["rmse_r_m"] for r in sel],
                      marker="o", label=label)
    for T in sorted({t for _, t in series}):
        sel = sorted({(r["snr_db"], r["crlb_theta_deg"], r["crlb_r_m"])
                      for r in rows if r["snapshots"] == T and r["crlb_theta_deg"] > 0})
        if not sel:
            continue
        label = f"sqrt(CRLB) (T={T})" if multi_t else "sqrt(CRLB)"
        ax_t.semilogy([s[0] for s in sel], [s[1] for s in sel], "k--", label=label)
        ax_r.semilogy([s[0] for s in sel], [s[2] for s in sel], "k--", label=label)
    ax_t.set_xlabel("SNR (dB)")
    ax_t.set_ylabel("RMSE theta (deg)")
    ax_r.set_xlabel("SNR (dB)")
    ax_r.set_ylabel("RMSE range (m)")
    for ax in (ax_t, ax_r):
        ax.grid(True, which="both", alpha=0.3)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def crlb_figure(rows: list[dict], path) -> None:
    """sqrt(CRLB) vs SNR, one pair of lines per group count L."""
    rows = [r for r in _finite_snr(rows) if math.isfinite(r["crlb_theta_deg"])]
    fig, (ax_t, ax_r) = plt.subplots(1, 2, figsize=(9.6, 4.0))
    for L in sorted({r["l"] for r in rows}):
        sel = sorted((r for r in rows if r["l"] == L), key=lambda r: r["snr_db"])
        ax_t.semilogy([r["snr_db"] for r in sel], [r["crlb_theta_deg"] for r in sel],
                      marker="s", label=f"L={L}")
        ax_r.semilogy([r["snr_db"] for r in sel], [r["crlb_r_m"] for r in sel],
                      marker="s", label=f"L={L}")
    ax_t.set_xlabel("SNR (dB)")
    ax_t.set_ylabel("sqrt(CRLB) theta (deg)")
    ax_r.set_xlabel("SNR (dB)")
    ax_r.set_ylabel("sqrt(CRLB) range (m)")
    for ax in (ax_t, ax_r):
        ax.grid(True, which="both", alpha=0.3)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def loss_figure(history: list[tuple], path) -> None:
    """Training/validation loss per epoch, one panel per stage."""
    stages = sorted({h[0] for h in history})
    fig, axes = plt.subplots(1, len(stages), figsize=(4.8 * len(stages), 4.0),
                             squeeze=False)
    for ax, stage in zip(axes[0], stages):
        sel = [h for h in history if h[0] == stage]
        ax.semilogy([h[1] for h in sel], [h[2] for h in sel], label="train")
        vals = [(h[1], h[3]) for h in sel if math.isfinite(h[3])]
        if vals:
            ax.semilogy([v[0] for v in vals], [v[1] for v in vals], label="validation")
        ax.set_xlabel("epoch")
        ax.set_ylabel("MSE (scaled)")
        ax.set_title(stage)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
