"""CSV writers for tables and plot data.

All files are UTF-8, comma separated, with a fixed header row; floats use six
significant digits. Column layouts are listed in ``COLUMNS``.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import SpecError
from .metrics import Metrics

COLUMNS = {
    "metrics.csv": [
        "label", "distribution", "arms", "null_arms", "rho", "budget", "mode", "sample_size",
        "delta", "policy", "state", "reps", "rate", "rate_se", "naive_rate", "naive_s_rate",
        "asn", "asn_se", "s_inf", "s_inf_se", "mean_rounds", "inconclusive", "unestimable",
        "gamma_mean",
    ],
    "size_inflation.csv": [
        "label", "distribution", "rho", "budget", "policy", "size", "size_se",
        "naive_size", "naive_se", "naive_s_size",
    ],
    "power_curve.csv": ["label", "distribution", "mode", "policy", "delta", "power", "power_se"],
    "asn_sinf.csv": ["label", "distribution", "policy", "delta", "asn", "asn_se", "s_inf", "s_inf_se"],
    "loss.csv": ["label", "distribution", "policy", "delta", "lambda", "asn", "s_inf", "loss"],
}
TABLE_FIXED = ["label", "distribution", "mu1", "mu2", "rho", "budget", "sample_size"]
TABLE_METRICS = ["size", "power", "asn", "s_inf"]


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return "%.6g" % value
    if isinstance(value, (tuple, list)):
        return " ".join(fmt(v) for v in value)
    return str(value)


def _write(path: Path, header: Sequence[str], rows: Iterable[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(r.get(c)) for c in header])
    return path


def _budget(sc) -> str:
    sup = sc.budget.support
    return str(sup[0]) if len(sup) == 1 else "|".join(str(s) for s in sup)


def _base(m: Metrics) -> dict:
    sc = m.scenario
    return {
        "label": m.label, "distribution": sc.family, "arms": sc.arms, "null_arms": sc.null_arms,
        "rho": sc.rho, "budget": _budget(sc), "mode": sc.mode, "sample_size": sc.sample_size,
        "delta": sc.delta, "policy": m.policy, "state": m.state,
    }


def metric_rows(results: Sequence[Metrics]) -> list[dict]:
    rows = []
    for m in results:
        r = _base(m)
        r.update({k: getattr(m, k) for k in COLUMNS["metrics.csv"] if hasattr(m, k) and k not in r})
        rows.append(r)
    return rows


def table_rows(results: Sequence[Metrics], policies: Sequence[str]) -> list[dict]:
    """One row per scenario; size/power/ASN/S_inf per policy in the columns."""
    rows: dict[str, dict] = {}
    for m in results:
        sc = m.scenario
        row = rows.setdefault(m.label, {
            "label": m.label, "distribution": sc.family, "mu1": sc.arms[0], "mu2": sc.arms[1],
            "rho": sc.rho, "budget": _budget(sc), "sample_size": sc.sample_size,
        })
        if m.state == "H0":
            row[f"{m.policy}_size"] = m.rate
        else:
            row[f"{m.policy}_power"] = m.rate
            row[f"{m.policy}_asn"] = m.asn
            row[f"{m.policy}_s_inf"] = m.s_inf
    return list(rows.values())


def table_header(policies: Sequence[str]) -> list[str]:
    return TABLE_FIXED + [f"{p}_{k}" for p in policies for k in TABLE_METRICS]


def emit(results: Sequence[Metrics], out_dir: str | Path) -> list[Path]:
    """Write the table, long-form metrics and every non-empty plot-data CSV."""
    if not results:
        raise SpecError("no results to emit")
    out = Path(out_dir)
    written = []
    policies = list(dict.fromkeys(m.policy for m in results))
    for mode in ("fixed", "sequential"):
        sub = [m for m in results if m.scenario.mode == mode]
        if sub:
            written.append(_write(out / f"table_{mode}.csv", table_header(policies),
                                  table_rows(sub, policies)))
    written.append(_write(out / "metrics.csv", COLUMNS["metrics.csv"], metric_rows(results)))

    size = [dict(_base(m), size=m.rate, size_se=m.rate_se, naive_size=m.naive_rate,
                 naive_se=(m.naive_rate * (1 - m.naive_rate) / m.reps) ** 0.5,
                 naive_s_size=m.naive_s_rate)
            for m in results if m.state == "H0" and m.scenario.naive]
    swept = [m for m in results if m.scenario.delta is not None]
    power = [dict(_base(m), power=m.rate, power_se=m.rate_se) for m in swept
             if m.state == "H1" or m.scenario.delta == 0]
    seq = [m for m in swept if m.scenario.mode == "sequential" and m.state == "H1"]
    asn = [dict(_base(m), asn=m.asn, asn_se=m.asn_se, s_inf=m.s_inf, s_inf_se=m.s_inf_se) for m in seq]
    loss = [dict(_base(m), **{"lambda": lam, "asn": m.asn, "s_inf": m.s_inf, "loss": m.loss(lam)})
            for m in seq for lam in m.lambdas]
    for name, rows in (("size_inflation.csv", size), ("power_curve.csv", power),
                       ("asn_sinf.csv", asn), ("loss.csv", loss)):
        if rows:
            written.append(_write(out / name, COLUMNS[name], rows))
    return written


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[dict]) -> Path:
    return _write(Path(path), header, rows)
