import io
from decimal import Decimal

import pytest

from lobvol.errors import FormatError, OrderingError, ParameterError, ValidationError
from lobvol.ingest import (FormatConfig, concat_streams, parse_snapshots, segment_stream,
                           stream_index, write_snapshots)

from conftest import simple_book, snapshot_csv


def test_three_rows_one_segment():
    text = snapshot_csv([((ts), [("101", "1")], [("99", "2")]) for ts in (0, 10, 20)])
    s = parse_snapshots(text)
    assert len(s.records) == 3
    assert len(s.segments) == 1
    assert s.records[1].best_ask == (Decimal("101"), Decimal("1"))


def test_gap_splits_segments():
    text = snapshot_csv([simple_book(ts) for ts in (0, 10, 1000)])
    s = parse_snapshots(text, max_gap=30)
    spans = [(g.first_timestamp, g.last_timestamp) for g in s.segments]
    assert spans == [(0, 10), (1000, 1000)]


def test_crossed_book_is_named():
    text = snapshot_csv([simple_book(0), (10, [("100", "1")], [("100", "1")]), simple_book(20)])
    with pytest.raises(ValidationError) as err:
        parse_snapshots(text, strict=True)
    assert err.value.timestamp == 10
    assert "crossed" in str(err.value)
    s = parse_snapshots(text)
    assert [r.timestamp for r in s.records] == [0, 20]
    assert len(s.quarantine) == 1 and s.quarantine[0].timestamp == 10
    assert stream_index(s)["quarantined"][0]["timestamp"] == 10


@pytest.mark.parametrize("bad, what", [
    ((0, [("101", "0")], [("99", "1")]), "not positive"),
    ((0, [("101", "1")], [("-99", "1")]), "not positive"),
    ((0, [("101", "1"), ("100", "1")], [("99", "1")]), "strictly increasing"),
    ((0, [("101", "1")], [("98", "1"), ("99", "1")]), "strictly decreasing"),
    ((0, [("101", "1")], []), "no bid"),
])
def test_invariant_violations(bad, what):
    with pytest.raises(ValidationError, match=what):
        parse_snapshots(snapshot_csv([bad]), strict=True)


def test_format_error_reports_line():
    text = "timestamp,side,level,price,volume\n0,ask,1,101,1\n0,ask,2,abc,1\n"
    with pytest.raises(FormatError) as err:
        parse_snapshots(text)
    assert err.value.line == 3


def test_bad_header():
    with pytest.raises(FormatError, match="header"):
        parse_snapshots("time,side,level,price,volume\n")


def test_bad_side_label():
    with pytest.raises(FormatError, match="side"):
        parse_snapshots("timestamp,side,level,price,volume\n0,buy,1,1,1\n")


def test_non_monotone_timestamps():
    text = snapshot_csv([simple_book(20), simple_book(10)])
    with pytest.raises(OrderingError):
        parse_snapshots(text)
    text = snapshot_csv([simple_book(10), simple_book(20), simple_book(10)])
    with pytest.raises(OrderingError):
        parse_snapshots(text)


def test_duplicate_level_quarantined():
    text = "timestamp,side,level,price,volume\n0,ask,1,101,1\n0,ask,1,102,1\n0,bid,1,99,1\n"
    s = parse_snapshots(text)
    assert not s.records and "duplicate" in s.quarantine[0].reason


def test_levels_sorted_by_level_number():
    text = "timestamp,side,level,price,volume\n0,ask,2,102,3\n0,ask,1,101,1\n0,bid,1,99,1\n"
    rec = parse_snapshots(text).records[0]
    assert rec.asks == ((Decimal("101"), Decimal("1")), (Decimal("102"), Decimal("3")))


def test_segment_stream_param_error():
    s = parse_snapshots(snapshot_csv([simple_book(0)]))
    with pytest.raises(ParameterError):
        segment_stream(s, 5)


def test_segment_stream_two_day_hole():
    s = parse_snapshots(snapshot_csv([simple_book(t) for t in (0, 10, 20, 172820, 172830)]))
    assert len(s.segments) == 2
    assert [len(g) for g in s.segments] == [3, 2]
    assert len(segment_stream(s, 200000).segments) == 1


def test_segments_partition_records(random_stream_csv):
    s = parse_snapshots(random_stream_csv)
    covered = []
    for g in s.segments:
        covered.extend(range(g.start, g.stop))
    assert covered == list(range(len(s.records)))
    for a, b in zip(s.segments, s.segments[1:]):
        assert a.last_timestamp < b.first_timestamp
    assert len(s.segments) == 3


def test_round_trip_long(random_stream_csv):
    s = parse_snapshots(random_stream_csv)
    buf = io.StringIO()
    write_snapshots(s, buf)
    again = parse_snapshots(buf.getvalue())
    assert again.records == s.records
    assert again.segments == s.segments
    assert buf.getvalue() == random_stream_csv


def test_round_trip_preserves_tiny_decimals():
    text = snapshot_csv([(0, [("101.10", "0.00000001")], [("99.000", "1.50")])])
    s = parse_snapshots(text)
    assert s.records[0].best_ask[1] == Decimal("1E-8")
    buf = io.StringIO()
    write_snapshots(s, buf)
    assert buf.getvalue() == text


def test_wide_layout_round_trip(random_stream_csv):
    s = parse_snapshots(random_stream_csv)
    cfg = FormatConfig(layout="wide", levels=3)
    buf = io.StringIO()
    write_snapshots(s, buf, cfg)
    again = parse_snapshots(buf.getvalue(), cfg)
    assert again.records == s.records


def test_custom_columns_and_delimiter():
    cfg = FormatConfig(delimiter=";", columns=("ts", "s", "lvl", "px", "qty"), ask_label="A", bid_label="B")
    text = "qty;px;lvl;s;ts\n1;101;1;A;0\n2;99;1;B;0\n"
    rec = parse_snapshots(text, cfg).records[0]
    assert rec.best_bid == (Decimal("99"), Decimal("2"))


def test_bytes_and_binary_file_input():
    text = snapshot_csv([simple_book(0), simple_book(10)])
    assert len(parse_snapshots(text.encode()).records) == 2
    assert len(parse_snapshots(io.BytesIO(text.encode())).records) == 2


def test_concat_streams_segments_across_files():
    a = parse_snapshots(snapshot_csv([simple_book(t) for t in (0, 10)]))
    b = parse_snapshots(snapshot_csv([simple_book(t) for t in (20, 30)]))
    c = parse_snapshots(snapshot_csv([simple_book(t) for t in (500,)]))
    merged = concat_streams([a, b, c])
    assert len(merged.records) == 5 and len(merged.segments) == 2
    with pytest.raises(OrderingError):
        concat_streams([b, a])


def test_empty_stream():
    s = parse_snapshots("timestamp,side,level,price,volume\n")
    assert len(s) == 0 and s.segments == ()
