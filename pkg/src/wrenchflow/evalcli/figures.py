"""Figure rendering for the report path (matplotlib, Agg backend).

Figures accompany the CSV/markdown outputs; the delimited files remain the
canonical record and nothing downstream depends on the images. Rendering
failures degrade to a warning so headless or stripped environments still
produce reports.
"""

from __future__ import annotations

import os
import warnings

__all__ = ["render_metric_bars", "render_noise_sweep", "render_multi_contact",
           "render_tier_bars"]


def _plt():
    import matplotlib
    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt
    return plt


def _save(fig, out_dir, name):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    return path


def _guard(fn):
    def wrapped(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as e:  # figures are best-effort companions to the CSVs
            warnings.warn(f"figure rendering skipped: {e}")
            return None
    return wrapped


@_guard
def render_metric_bars(report, out_dir, name="metrics.png", title="contact metrics"):
    plt = _plt()
    rates = [("detect", report.detection_rate_pct), ("false alarm", report.false_alarm_pct),
             ("link", report.target_link_pct), ("link ±1", report.tolerant_link_pct),
             ("time", report.target_time_pct), ("time ±0.1s", report.tolerant_time_pct)]
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.bar([r[0] for r in rates], [r[1] for r in rates], color="#4878d0")
    ax.set_ylabel("%")
    ax.set_ylim(0, 105)
    ax.set_title(title)
    ax.tick_params(axis="x", rotation=30)
    out = _save(fig, out_dir, name)
    plt.close(fig)
    return out


@_guard
def render_noise_sweep(rows, out_dir, name="noise_sweep.png"):
    plt = _plt()
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    estimators = sorted({r["estimator"] for r in rows})
    for est in estimators:
        series = sorted((r for r in rows if r["estimator"] == est), key=lambda r: r["sigma"])
        sig = [r["sigma"] for r in series]
        axes[0].plot(sig, [r["target_link_pct"] for r in series], marker="o", label=est)
        axes[1].plot(sig, [r["err_force_mag_n"] for r in series], marker="o", label=est)
    axes[0].set_xlabel("noise sigma")
    axes[0].set_ylabel("localization accuracy (%)")
    axes[1].set_xlabel("noise sigma")
    axes[1].set_ylabel("force magnitude error (N)")
    axes[0].legend()
    fig.suptitle("sensitivity to observation noise")
    out = _save(fig, out_dir, name)
    plt.close(fig)
    return out


@_guard
def render_multi_contact(rows, out_dir, name="multi_contact.png"):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 3.2))
    estimators = sorted({r["estimator"] for r in rows})
    width = 0.8 / max(1, len(estimators))
    for i, est in enumerate(estimators):
        series = sorted((r for r in rows if r["estimator"] == est), key=lambda r: r["k"])
        ks = [r["k"] for r in series]
        ax.bar([k + i * width for k in ks], [r["detection_rate_pct"] for r in series],
               width=width, label=est)
    ax.set_xlabel("simultaneous contacts")
    ax.set_ylabel("detection rate (%)")
    ax.legend()
    ax.set_title("zero-shot multi-contact detection")
    out = _save(fig, out_dir, name)
    plt.close(fig)
    return out


@_guard
def render_tier_bars(rows, out_dir, name="robustness.png"):
    plt = _plt()
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    tiers = [r["tier"] for r in rows]
    axes[0].bar(tiers, [r["sr_pct"] for r in rows], color="#6acc64")
    axes[0].set_ylabel("success rate (%)")
    axes[1].bar(tiers, [r["false_alarm_pct"] for r in rows], color="#d65f5f")
    axes[1].set_ylabel("estimator false alarm (%)")
    fig.suptitle("controller robustness vs contact estimation")
    out = _save(fig, out_dir, name)
    plt.close(fig)
    return out
