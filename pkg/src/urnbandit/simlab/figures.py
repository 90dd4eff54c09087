"""PNG renderings of the plot-data CSVs."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _read(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _series(rows, key, x, y, extra=()):
    out = defaultdict(list)
    for r in rows:
        out[tuple(r[k] for k in (key,) + tuple(extra))].append((float(r[x]), float(r[y])))
    return {k: sorted(v) for k, v in out.items()}


def _panels(rows, by="distribution"):
    groups = defaultdict(list)
    for r in rows:
        groups[r[by]].append(r)
    return dict(sorted(groups.items()))


def size_inflation(rows, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    labels = [f"{r['distribution']} rho={r['rho']}" for r in rows]
    xs = range(len(rows))
    ax.bar([x - 0.2 for x in xs], [float(r["size"]) for r in rows], 0.4, label="corrected")
    ax.bar([x + 0.2 for x in xs], [float(r["naive_size"]) for r in rows], 0.4, label="naive")
    ax.axhline(0.05, color="k", lw=0.8, ls="--")
    ax.axhspan(0.035, 0.065, color="0.9", zorder=0)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("empirical size")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _curves(rows, path: Path, y: str, ylabel: str, hue=("policy",), title_extra="") -> Path:
    panels = _panels(rows)
    fig, axes = plt.subplots(1, len(panels), figsize=(4 * len(panels), 3.2), squeeze=False)
    for ax, (dist, sub) in zip(axes[0], panels.items()):
        for key, pts in _series(sub, hue[0], "delta", y, hue[1:]).items():
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3,
                    label=" ".join(key))
        ax.set_title(f"{dist}{title_extra}")
        ax.set_xlabel("delta")
        ax.set_ylabel(ylabel)
        ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_all(out_dir: str | Path) -> list[Path]:
    """Render a PNG next to each plot-data CSV present in ``out_dir``."""
    out = Path(out_dir)
    made = []
    if (out / "size_inflation.csv").exists():
        made.append(size_inflation(_read(out / "size_inflation.csv"), out / "size_inflation.png"))
    if (out / "power_curve.csv").exists():
        made.append(_curves(_read(out / "power_curve.csv"), out / "power_curve.png", "power", "power"))
    if (out / "asn_sinf.csv").exists():
        rows = _read(out / "asn_sinf.csv")
        made.append(_curves(rows, out / "asn.png", "asn", "ASN"))
        made.append(_curves(rows, out / "s_inf.png", "s_inf", "mean S_inf"))
    if (out / "loss.csv").exists():
        rows = _read(out / "loss.csv")
        for lam in sorted({r["lambda"] for r in rows}, key=float):
            sub = [r for r in rows if r["lambda"] == lam]
            made.append(_curves(sub, out / f"loss_lambda{lam}.png", "loss", "loss",
                                title_extra=f" (lambda={lam})"))
    return made
