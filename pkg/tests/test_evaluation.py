from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from asrlab.corpus import CorpusManifest, Severity, UtteranceRecord
from asrlab.errors import InvalidCounts, MismatchedSpeakers, UnknownUtterance
from asrlab.evaluation import (
    EvalReport,
    SpeakerRow,
    format_hms,
    parse_report_csv,
    render_report,
    score_decodes,
    wra,
    wra_2dp,
)

from reference_counts import TABLES, reports_for


def test_wra_formula():
    assert wra(4, 1) == 75.0
    assert wra(7, 0) == 100.0
    assert wra(5, 5) == 0.0


def test_wra_table_totals():
    assert wra_2dp(73942, 1453) == Decimal("98.03")
    assert wra_2dp(73942, 1275) == Decimal("98.28")
    assert abs(wra(73942, 1453) - 98.03) <= 0.01


def test_wra_rounds_half_away_from_zero():
    assert wra_2dp(800, 1) == Decimal("99.88")  # 99.875 exact
    assert wra_2dp(1600, 1) == Decimal("99.94")  # 99.9375


@pytest.mark.parametrize("tot,err", [(0, 0), (3, 4), (3, -1), (2.5, 1)])
def test_wra_rejects_bad_counts(tot, err):
    with pytest.raises(InvalidCounts):
        wra(tot, err)


@given(st.integers(1, 10_000), st.data(), st.integers(1, 50))
def test_wra_scale_invariant(tot, data, k):
    err = data.draw(st.integers(0, tot))
    assert wra(k * tot, k * err) == pytest.approx(wra(tot, err), abs=1e-12)
    assert wra_2dp(k * tot, k * err) == wra_2dp(tot, err)


@pytest.mark.parametrize("systems,rows,total", TABLES)
def test_every_table_cell(systems, rows, total):
    for spk, _, tot, errs, printed in rows:
        for e, p in zip(errs, printed):
            assert abs(wra(tot, e) - float(p)) <= 0.01, (spk, e, p)
    reports = reports_for(systems, rows)
    tot, errs, printed = total
    for rep, e, p in zip(reports, errs, printed):
        assert rep.totals.total_words == tot
        assert rep.totals.errors == e
        assert abs(rep.wra - float(p)) <= 0.01


def test_totals_are_pooled_not_averaged():
    rep = EvalReport("s", [SpeakerRow("A", "High", 10, 5), SpeakerRow("B", "Mild", 90, 0)])
    assert rep.wra == pytest.approx(95.0)
    assert rep.wra != pytest.approx((50.0 + 100.0) / 2)


def _manifest():
    recs = [
        UtteranceRecord("F02", Severity.HIGH, 0, "a", 1, "x.wav", "test"),
        UtteranceRecord("F02", Severity.HIGH, 1, "b", 1, "y.wav", "test"),
        UtteranceRecord("M05", Severity.MILD, 1, "b", 2, "z.wav", "test"),
    ]
    return CorpusManifest(["a", "b"], recs)


def test_score_decodes_counts():
    m = _manifest()
    decodes = [("F02_W0000_R1", 0), ("F02_W0001_R1", 0), ("M05_W0001_R2", 1)]
    rep = score_decodes(decodes, m, "sys16")
    assert [(r.speaker_id, r.total_words, r.errors) for r in rep.rows] == [("F02", 2, 1), ("M05", 1, 0)]
    assert rep.totals.wra_text == "66.67"
    assert {r.severity: r.errors for r in rep.by_severity()} == {"High": 1, "Mild": 0}


def test_score_decodes_all_correct():
    m = _manifest()
    rep = score_decodes([(r.utterance_id, r.word_id) for r in m.records], m)
    assert all(r.wra_text == "100.00" for r in rep.rows)


def test_score_decodes_unknown_id():
    with pytest.raises(UnknownUtterance):
        score_decodes([("NOPE_W0000_R1", 0)], _manifest())


def test_reference_speaker_row():
    assert SpeakerRow("F02", "High", 5355, 77).wra_text == "98.56"


def test_render_single_report_columns():
    rep = EvalReport("sys16", [SpeakerRow("M01", "High", 3, 1)])
    header = render_report([rep], "csv").splitlines()[0].split(",")
    assert header == ["speaker", "severity", "total_words", "errors_sys16", "wra_sys16"]


@pytest.mark.parametrize("systems,rows,total", TABLES)
def test_render_reproduces_printed_columns(systems, rows, total):
    text = render_report(reports_for(systems, rows), "csv")
    lines = text.strip().splitlines()[1:]
    n = len(systems)
    for line, (spk, _, _, _, printed) in zip(lines, rows):
        cells = line.split(",")
        assert cells[0] == spk
        for got, want in zip(cells[3 + n:], printed):
            assert abs(float(got) - float(want)) <= 0.01
    assert lines[-1].split(",")[3 + n:] == list(total[2])


@pytest.mark.parametrize("systems,rows,total", TABLES)
def test_render_parse_roundtrip(systems, rows, total):
    reports = reports_for(systems, rows)
    back = parse_report_csv(render_report(reports, "csv", include_timing=True))
    assert [r.system_name for r in back] == list(systems)
    for a, b in zip(reports, back):
        assert a.rows == b.rows


def test_render_text_aligned():
    rep = EvalReport("sys16", [SpeakerRow("M01", "High", 3, 1)])
    lines = render_report(rep, "text").splitlines()
    assert lines[0].startswith("speaker")
    assert lines[-1].split()[:3] == ["Total", "3", "1"]


def test_render_mismatched_speakers():
    a = EvalReport("a", [SpeakerRow("M01", "High", 3, 1)])
    b = EvalReport("b", [SpeakerRow("M02", "High", 3, 1)])
    with pytest.raises(MismatchedSpeakers):
        render_report([a, b])


def test_render_unknown_format():
    with pytest.raises(ValueError):
        render_report(EvalReport("a", [SpeakerRow("M01", "High", 3, 1)]), "xml")


def test_timing_table():
    from asrlab.evaluation import StageTiming

    rep = EvalReport("sys16", [SpeakerRow("M01", "High", 3, 0)], StageTiming(482, 19335, 19817))
    out = render_report(rep, "csv", include_timing=True)
    assert "sys16,8:02,5:22:15,5:30:17,100.00" in out


def test_format_hms():
    assert format_hms(482) == "8:02"
    assert format_hms(3601) == "1:00:01"


def test_invalid_rows_rejected():
    with pytest.raises(InvalidCounts):
        EvalReport("a", [SpeakerRow("M01", "High", 3, 4)])


def test_svg(tmp_path):
    pytest.importorskip("matplotlib")
    from asrlab.evaluation import write_svg

    rep = EvalReport("sys16", [SpeakerRow("M01", "High", 3, 1), SpeakerRow("M05", "Mild", 4, 0)])
    write_svg([rep], tmp_path / "r.svg")
    assert (tmp_path / "r.svg").read_text().lstrip().startswith("<?xml")
