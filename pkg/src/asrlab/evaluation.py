"""Word recognition accuracy, per-speaker reports and system comparison tables."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from asrlab.errors import InvalidCounts, MismatchedSpeakers, UnknownUtterance


def _check_counts(w_tot, w_err):
    if int(w_tot) != w_tot or int(w_err) != w_err:
        raise InvalidCounts("counts must be integers")
    if w_tot < 1 or not 0 <= w_err <= w_tot:
        raise InvalidCounts(f"need w_tot >= 1 and 0 <= w_err <= w_tot, got ({w_tot}, {w_err})")


def wra(w_tot: int, w_err: int) -> float:
    """Word recognition accuracy in percent: (W_TOT - W_err) / W_TOT * 100."""
    _check_counts(w_tot, w_err)
    return (w_tot - w_err) / w_tot * 100.0


def wra_2dp(w_tot: int, w_err: int) -> Decimal:
    """WRA rounded half away from zero to 2 decimals, from exact integer arithmetic."""
    _check_counts(w_tot, w_err)
    exact = Decimal(100 * (w_tot - w_err)) / Decimal(w_tot)
    return exact.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class SpeakerRow:
    speaker_id: str
    severity: str
    total_words: int
    errors: int

    @property
    def wra(self):
        return wra(self.total_words, self.errors)

    @property
    def wra_text(self):
        return str(wra_2dp(self.total_words, self.errors))


@dataclass(frozen=True)
class StageTiming:
    som_seconds: float = 0.0
    mlp_seconds: float = 0.0
    total_seconds: float = 0.0


@dataclass
class EvalReport:
    system_name: str
    rows: list = field(default_factory=list)
    timing: StageTiming | None = None

    def __post_init__(self):
        for r in self.rows:
            _check_counts(r.total_words, r.errors)

    @property
    def totals(self) -> SpeakerRow:
        return SpeakerRow(
            "Total", "",
            sum(r.total_words for r in self.rows),
            sum(r.errors for r in self.rows),
        )

    @property
    def wra(self):
        return self.totals.wra

    def by_severity(self):
        agg = {}
        for r in self.rows:
            tot, err = agg.get(r.severity, (0, 0))
            agg[r.severity] = (tot + r.total_words, err + r.errors)
        return [SpeakerRow(sev, sev, tot, err) for sev, (tot, err) in agg.items()]


def score_decodes(decodes, manifest, system_name="sys") -> EvalReport:
    """Per-speaker W_TOT / W_err from (utterance_id, predicted word id) pairs."""
    lookup = manifest.by_id()
    counts = {}
    for uid, predicted in decodes:
        rec = lookup.get(uid)
        if rec is None:
            raise UnknownUtterance(f"utterance {uid!r} is not in the manifest")
        tot, err = counts.get(rec.speaker_id, (0, 0))
        counts[rec.speaker_id] = (tot + 1, err + int(int(predicted) != rec.word_id))
    rows = [
        SpeakerRow(spk, sev.value, *counts[spk])
        for spk, sev in manifest.speakers().items()
        if spk in counts
    ]
    return EvalReport(system_name, rows)


# -------------------------------------------------------------- rendering


def format_hms(seconds):
    """H:MM:SS, or M:SS under an hour."""
    s = int(round(seconds))
    h, rem = divmod(s, 3600)
    m, sec = divmod(rem, 60)
    return f"{h}:{m:02d}:{sec:02d}" if h else f"{m}:{sec:02d}"


def _comparison_rows(reports):
    if not reports:
        raise ValueError("no reports to render")
    base = reports[0]
    speakers = [(r.speaker_id, r.severity, r.total_words) for r in base.rows]
    for rep in reports[1:]:
        other = [(r.speaker_id, r.severity, r.total_words) for r in rep.rows]
        if sorted(other) != sorted(speakers):
            raise MismatchedSpeakers(f"{rep.system_name} covers different speakers/totals than {base.system_name}")
    index = [{r.speaker_id: r for r in rep.rows} for rep in reports]
    table = []
    for spk, sev, tot in speakers:
        errs = [idx[spk].errors for idx in index]
        wras = [idx[spk].wra_text for idx in index]
        table.append([spk, sev, str(tot)] + [str(e) for e in errs] + wras)
    totals = [rep.totals for rep in reports]
    table.append(["Total", "", str(totals[0].total_words)]
                 + [str(t.errors) for t in totals] + [t.wra_text for t in totals])
    header = (["speaker", "severity", "total_words"]
              + [f"errors_{r.system_name}" for r in reports]
              + [f"wra_{r.system_name}" for r in reports])
    return header, table


def _timing_rows(reports):
    header = ["system", "som_time", "feed_forward_time", "total_time", "wra"]
    rows = []
    for rep in reports:
        t = rep.timing or StageTiming()
        rows.append([rep.system_name, format_hms(t.som_seconds), format_hms(t.mlp_seconds),
                     format_hms(t.total_seconds), rep.totals.wra_text])
    return header, rows


def _aligned(header, rows):
    widths = [max(len(str(c)) for c in col) for col in zip(header, *rows)]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines) + "\n"


def render_report(reports, fmt="csv", include_timing=False) -> str:
    """Side-by-side per-speaker comparison of several systems.

    ``include_timing`` appends a second table (SOM, feed-forward and total
    training time plus overall WRA per system); leave it off wherever the
    output must be byte-reproducible.
    """
    if isinstance(reports, EvalReport):
        reports = [reports]
    header, table = _comparison_rows(reports)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(table)
        if include_timing:
            buf.write("\n")
            th, tr = _timing_rows(reports)
            w.writerow(th)
            w.writerows(tr)
        return buf.getvalue()
    if fmt == "text":
        out = _aligned(header, table)
        if include_timing:
            out += "\n" + _aligned(*_timing_rows(reports))
        return out
    raise ValueError(f"unknown format {fmt!r}")


def parse_report_csv(text) -> list:
    """Inverse of ``render_report(..., fmt="csv")`` for the count columns."""
    lines = text.split("\n\n", 1)[0]
    reader = csv.reader(io.StringIO(lines))
    header = next(reader)
    systems = [h[len("errors_"):] for h in header if h.startswith("errors_")]
    n = len(systems)
    rows = [[] for _ in systems]
    for rec in reader:
        if not rec or rec[0] == "Total":
            continue
        spk, sev, tot = rec[0], rec[1], int(rec[2])
        for i in range(n):
            rows[i].append(SpeakerRow(spk, sev, tot, int(rec[3 + i])))
    return [EvalReport(name, r) for name, r in zip(systems, rows)]


def write_svg(reports, path):
    """Grouped bar chart of per-speaker WRA, one bar per system."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    speakers = [f"{r.speaker_id}\n{r.severity}" for r in reports[0].rows]
    x = np.arange(len(speakers))
    width = 0.8 / len(reports)
    fig, ax = plt.subplots(figsize=(max(6, len(speakers) * 0.9), 4))
    for i, rep in enumerate(reports):
        ax.bar(x + i * width - 0.4 + width / 2, [r.wra for r in rep.rows], width, label=rep.system_name)
    ax.set_xticks(x)
    ax.set_xticklabels(speakers, fontsize=8)
    ax.set_ylabel("WRA (%)")
    lo = min(min(r.wra for r in rep.rows) for rep in reports)
    ax.set_ylim(max(0.0, lo - 5.0), 100.0)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
