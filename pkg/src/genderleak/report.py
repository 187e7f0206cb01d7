"""Human-readable tables: markdown for reports, aligned columns for terminals."""

from __future__ import annotations

import os
import sys

from .attribution import TokenRanking
from .features import TfidfReport
from .flip import FlipTable
from .model import EvalReport

POS_TITLES = {"adjective": "Adjectives", "noun": "Nouns", "verb": "Verbs", "other": "Other"}


def use_color(stream=sys.stdout) -> bool:
    return "NO_COLOR" not in os.environ and hasattr(stream, "isatty") and stream.isatty()


def _fmt(x, digits=3) -> str:
    if isinstance(x, float):
        return f"{x:.{digits}f}"
    return str(x)


def markdown_table(header: list[str], rows: list[list], digits: int = 3) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    for r in rows:
        lines.append("| " + " | ".join(_fmt(c, digits) for c in r) + " |")
    return "\n".join(lines)


def text_table(header: list[str], rows: list[list], digits: int = 3, color: bool = False) -> str:
    cells = [header] + [[_fmt(c, digits) for c in r] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]

    def line(row):
        return "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))

    head = line(header)
    if color:
        head = f"\033[1m{head}\033[0m"
    return "\n".join([head, "  ".join("-" * w for w in widths)] + [line(r) for r in cells[1:]])


# --- evaluation (per-class layout and dataset comparison) ----------------


EVAL_HEADER = ["Model", "Gender", "Precision", "Recall", "F1", "Acc.", "Macro Precision", "Macro Recall",
               "Macro F1", "Wtd. Precision", "Wtd. Recall", "Wtd. F1"]


def eval_rows(name: str, r: EvalReport) -> list[list]:
    agg = [r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1,
           r.weighted_precision, r.weighted_recall, r.weighted_f1]
    f, m = r.per_class["female"], r.per_class["male"]
    return [
        [name, "Female", f.precision, f.recall, f.f1] + agg,
        ["", "Male", m.precision, m.recall, m.f1] + [""] * len(agg),
    ]


def eval_markdown(reports: dict[str, EvalReport]) -> str:
    rows = []
    for name, r in reports.items():
        rows += eval_rows(name, r)
    return markdown_table(EVAL_HEADER, rows)


def comparison_markdown(reports: dict[str, EvalReport], baseline: str) -> str:
    """Accuracy and macro scores per dataset, with the macro-F1 drop against ``baseline``."""
    base = reports[baseline].macro_f1
    rows = []
    for name, r in reports.items():
        f1 = _fmt(r.macro_f1)
        delta = base - r.macro_f1
        if name != baseline and list(reports).index(name) > list(reports).index(baseline):
            arrow = "↓" if delta >= 0 else "↑"
            f1 = f"{f1} ({arrow} {abs(delta) * 100:.1f}%)"
        rows.append([name, r.accuracy, r.macro_precision, r.macro_recall, f1])
    return markdown_table(["Dataset", "Acc.", "Macro P", "Macro R", "Macro F1"], rows)


# --- token tables ---------------------------------------------------------


FLIP_HEADER = ["Token", "F → M Count", "M → F Count", "Absolute Difference"]


def flip_rows(table: FlipTable, k: int | None = 10) -> list[list]:
    rows = table.rows if k is None else table.rows[:k]
    return [[r.token, r.f_to_m, r.m_to_f, r.abs_diff] for r in rows]


def flip_markdown(table: FlipTable, k: int | None = 10) -> str:
    return markdown_table(FLIP_HEADER, flip_rows(table, k), digits=2)


def tfidf_sections(report: TfidfReport, markdown: bool = True) -> str:
    out = []
    render = markdown_table if markdown else text_table
    for direction in ("male", "female"):
        for pos, rows in report.tables[direction].items():
            title = f"{direction.capitalize()} {POS_TITLES.get(pos, pos.capitalize())}"
            body = render(["Token", "Female", "Male", "Diff"],
                          [[r.token, r.score_female, r.score_male, r.diff] for r in rows], 6)
            out.append(f"#### {title}\n\n{body}" if markdown else f"{title}\n{body}")
    return "\n\n".join(out)


def ranking_sections(male: TokenRanking, female: TokenRanking, markdown: bool = True) -> str:
    out = []
    render = markdown_table if markdown else text_table
    for pos in male.tables:
        rows = [[r.token, r.mean_shap, r.support] for r in male.tables[pos]]
        rows += [[r.token, r.mean_shap, r.support] for r in female.tables.get(pos, [])]
        title = f"{POS_TITLES.get(pos, pos.capitalize())} (male +, female −)"
        body = render(["Token", "Mean SHAP", "Support"], rows, 5)
        out.append(f"#### {title}\n\n{body}" if markdown else f"{title}\n{body}")
    return "\n\n".join(out)
