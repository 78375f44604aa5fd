"""
Report rendering: human-readable tables, tab-delimited records, and PNG
figures written next to them.

Fuzz runs produce report.txt / report.tsv plus two charts (found
vulnerabilities per endpoint, submissions per injection point); training
runs produce training_report.txt / training_loss.tsv plus the loss curve.
Wall-clock columns are the only non-deterministic fields.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .harness import FuzzReport
from .training import TrainingReport

FOUND_COLOR = "#2b6cb0"
MISS_COLOR = "#c0c4cc"


def _table(rows: list[list[str]], header: list[str]) -> str:
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]

    def fmt(row) -> str:
        return "  ".join(str(cell).ljust(w) for cell, w in zip(row, widths)).rstrip()

    lines = [fmt(header), fmt(["-" * w for w in widths])]
    lines.extend(fmt(r) for r in rows)
    return "\n".join(lines)


def write_fuzz_report(report: FuzzReport, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    rows = [
        [p.endpoint_id, p.param, "yes" if p.found else "no",
         p.attack_type.value if p.attack_type else "-",
         str(p.attempts), f"{p.seconds:.2f}"]
        for p in report.points
    ]
    header = ["endpoint", "param", "found", "type", "attempts", "seconds"]
    summary = [
        f"validation: {report.validation.value}",
        f"vulnerabilities found: {len(report.vulnerabilities)}",
        f"submissions: {report.t_total} total, {report.t_success} successful",
        f"exploitation rate: {report.er_percent}",
        f"wall clock: {report.wall_clock_seconds:.2f}s",
    ]
    txt = out / "report.txt"
    txt.write_text(_table(rows, header) + "\n\n" + "\n".join(summary) + "\n",
                   encoding="utf-8")
    written.append(txt)

    tsv = out / "report.tsv"
    lines = ["endpoint\tparam\tfound\tattempts\tt_total\tt_success\ter\tseconds"]
    for p in report.points:
        lines.append(
            f"{p.endpoint_id}\t{p.param}\t{int(p.found)}\t{p.attempts}\t"
            f"{report.t_total}\t{report.t_success}\t{float(report.er):.6f}\t"
            f"{p.seconds:.3f}"
        )
    tsv.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(tsv)

    written.append(_vulns_figure(report, out / "report_vulns.png"))
    written.append(_attempts_figure(report, out / "report_attempts.png"))
    return written


def _vulns_figure(report: FuzzReport, path: Path) -> Path:
    per_endpoint: dict[str, list[int]] = {}
    for p in report.points:
        tested, found = per_endpoint.setdefault(p.endpoint_id, [0, 0])
        per_endpoint[p.endpoint_id][0] = tested + 1
        per_endpoint[p.endpoint_id][1] = found + int(p.found)
    names = list(per_endpoint)
    tested = [per_endpoint[n][0] for n in names]
    found = [per_endpoint[n][1] for n in names]
    fig, ax = plt.subplots(figsize=(6.4, 0.5 * max(len(names), 4) + 1.2))
    ypos = range(len(names))
    ax.barh(ypos, tested, color=MISS_COLOR, label="params tested")
    ax.barh(ypos, found, color=FOUND_COLOR, label="vulnerable, found")
    ax.set_yticks(list(ypos), names)
    ax.invert_yaxis()
    ax.set_xlabel("injection points")
    ax.set_title(
        f"{len(report.vulnerabilities)} vulnerabilities, "
        f"ER {report.er_percent} ({report.validation.value} validation)"
    )
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _attempts_figure(report: FuzzReport, path: Path) -> Path:
    labels = [f"{p.endpoint_id}.{p.param}" for p in report.points]
    attempts = [p.attempts for p in report.points]
    colors = [FOUND_COLOR if p.found else MISS_COLOR for p in report.points]
    fig, ax = plt.subplots(figsize=(max(6.4, 0.5 * len(labels)), 4.2))
    ax.bar(range(len(labels)), attempts, color=colors)
    ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("submissions")
    ax.set_title("submissions per injection point (filled = vulnerability found)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_training_report(report: TrainingReport, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    lines = [f"chosen architecture: {report.chosen.describe()}"]
    if len(report.grid_losses) > 1:
        lines.append("")
        lines.append(_table(
            [[c.describe(), f"{l:.4f}"] for c, l in report.grid_losses],
            ["grid point", "mean CV loss"],
        ))
    lines.append("")
    lines.append(f"steps: {report.steps}")
    lines.append(f"final loss: {report.final_loss:.4f}")
    for key, value in sorted(report.metadata.items()):
        lines.append(f"{key}: {value}")
    txt = out / "training_report.txt"
    txt.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(txt)

    tsv = out / "training_loss.tsv"
    rows = ["epoch\tloss"]
    rows.extend(f"{i + 1}\t{loss:.6f}" for i, loss in enumerate(report.epoch_losses))
    tsv.write_text("\n".join(rows) + "\n", encoding="utf-8")
    written.append(tsv)

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(range(1, len(report.epoch_losses) + 1), report.epoch_losses,
            marker="o", markersize=3, color=FOUND_COLOR)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss per pair")
    ax.set_title(f"training loss ({report.chosen.describe()})")
    fig.tight_layout()
    path = out / "training_loss.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
