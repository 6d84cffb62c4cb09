"""Parsing and segmentation of order-book snapshot files.

Two CSV layouts are understood.  The default *long* layout has one row per
(snapshot, side, level)::

    timestamp,side,level,price,volume
    1420070400,ask,1,315.50,0.01000000
    1420070400,ask,2,315.61,1.20000000
    1420070400,bid,1,315.01,2.00000000

The *wide* layout has one row per snapshot with ``ask_price_1,
ask_volume_1, ..., bid_price_20, bid_volume_20`` after the timestamp;
blank cells mark absent levels.

Prices and volumes are kept as :class:`decimal.Decimal` so that writing a
parsed stream back out reproduces the printed digits.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, replace
from decimal import Decimal, InvalidOperation
from typing import IO, Iterable, Iterator, Sequence

from .errors import FormatError, OrderingError, ParameterError, ValidationError

NOMINAL_INTERVAL = 10
DEFAULT_MAX_GAP = 3 * NOMINAL_INTERVAL
MAX_LEVELS = 20

Level = tuple[Decimal, Decimal]


@dataclass(frozen=True)
class SnapshotRecord:
    """One timestamped snapshot; ``asks``/``bids`` are (price, volume) pairs, best first."""

    timestamp: int
    asks: tuple[Level, ...]
    bids: tuple[Level, ...]

    @property
    def best_ask(self) -> Level:
        return self.asks[0]

    @property
    def best_bid(self) -> Level:
        return self.bids[0]


@dataclass(frozen=True)
class Segment:
    """A maximal gap-free run of records, ``records[start:stop]``."""

    start: int
    stop: int
    first_timestamp: int
    last_timestamp: int

    def __len__(self):
        return self.stop - self.start


@dataclass(frozen=True)
class SnapshotStream:
    records: tuple[SnapshotRecord, ...]
    segments: tuple[Segment, ...]
    nominal_interval: int = NOMINAL_INTERVAL
    max_gap: int = DEFAULT_MAX_GAP
    quarantine: tuple[ValidationError, ...] = ()

    def __len__(self):
        return len(self.records)

    @property
    def timestamps(self) -> list[int]:
        return [r.timestamp for r in self.records]

    def segment_records(self, segment: Segment) -> tuple[SnapshotRecord, ...]:
        return self.records[segment.start:segment.stop]


@dataclass(frozen=True)
class FormatConfig:
    """Column layout of a snapshot file.

    ``columns`` names the header fields for timestamp, side, level, price and
    volume (long layout) in that order; when ``has_header`` is false the file
    columns must appear in exactly that order.  For the wide layout the
    ``wide_template`` is formatted with ``side``, ``field`` and ``level``.
    """

    layout: str = "long"
    delimiter: str = ","
    columns: tuple[str, str, str, str, str] = ("timestamp", "side", "level", "price", "volume")
    has_header: bool = True
    ask_label: str = "ask"
    bid_label: str = "bid"
    levels: int = MAX_LEVELS
    wide_template: str = "{side}_{field}_{level}"

    def __post_init__(self):
        if self.layout not in ("long", "wide"):
            raise ParameterError(f"unknown layout {self.layout!r}")
        if len(self.columns) != 5:
            raise ParameterError("columns must name timestamp, side, level, price, volume")
        if not 1 <= self.levels <= MAX_LEVELS:
            raise ParameterError(f"levels must be in 1..{MAX_LEVELS}")
        if len(self.delimiter) != 1:
            raise ParameterError("delimiter must be a single character")

    def wide_columns(self) -> list[str]:
        names = [self.columns[0]]
        for side in (self.ask_label, self.bid_label):
            for level in range(1, self.levels + 1):
                for fld in ("price", "volume"):
                    names.append(self.wide_template.format(side=side, field=fld, level=level))
        return names


# --------------------------------------------------------------------------
# parsing


def _text_lines(source) -> Iterable[str]:
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    if isinstance(source, (io.RawIOBase, io.BufferedIOBase)) or "b" in getattr(source, "mode", ""):
        return io.TextIOWrapper(source, encoding="utf-8", newline="")
    return source


def _int_field(text, what, line):
    try:
        return int(text)
    except (TypeError, ValueError):
        raise FormatError(f"{what} {text!r} is not an integer", line) from None


def _dec_field(text, what, line):
    try:
        value = Decimal(text.strip())
    except (InvalidOperation, AttributeError):
        raise FormatError(f"{what} {text!r} is not a decimal number", line) from None
    if not value.is_finite():
        raise FormatError(f"{what} {text!r} is not finite", line)
    return value


def _check_book(timestamp, asks, bids, line):
    """Return a list of invariant violations (empty when the snapshot is valid)."""
    problems = []
    for name, levels in (("ask", asks), ("bid", bids)):
        if not levels:
            problems.append(f"no {name} levels")
        for price, volume in levels:
            if price <= 0:
                problems.append(f"{name} price {price} is not positive")
            if volume <= 0:
                problems.append(f"{name} volume {volume} is not positive")
    if any(asks[i][0] >= asks[i + 1][0] for i in range(len(asks) - 1)):
        problems.append("ask prices not strictly increasing")
    if any(bids[i][0] <= bids[i + 1][0] for i in range(len(bids) - 1)):
        problems.append("bid prices not strictly decreasing")
    if asks and bids and bids[0][0] >= asks[0][0]:
        problems.append(f"crossed book: best bid {bids[0][0]} >= best ask {asks[0][0]}")
    return [ValidationError(p, line=line, timestamp=timestamp) for p in problems]


def _locate(header, names, line):
    try:
        return [header.index(n) for n in names]
    except ValueError:
        missing = [n for n in names if n not in header]
        raise FormatError(f"header lacks column(s) {', '.join(missing)}", line) from None


def _iter_long(reader, cfg: FormatConfig) -> Iterator[tuple[int, int, list, list, list]]:
    """Yield ``(line, timestamp, asks, bids, problems)`` per snapshot of a long file."""
    if cfg.has_header:
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError("empty input, expected a header", 1) from None
        idx = _locate(header, list(cfg.columns), reader.line_num)
    else:
        idx = list(range(5))
    width = max(idx) + 1

    cur_ts = None
    first_line = 0
    sides: dict[str, dict[int, Level]] = {}
    problems: list[ValidationError] = []

    def flush():
        asks = [sides["ask"][k] for k in sorted(sides.get("ask", {}))]
        bids = [sides["bid"][k] for k in sorted(sides.get("bid", {}))]
        return first_line, cur_ts, asks, bids, problems

    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < width:
            raise FormatError(f"expected at least {width} fields, got {len(row)}", line)
        ts = _int_field(row[idx[0]], "timestamp", line)
        label = row[idx[1]].strip()
        if label == cfg.ask_label:
            side = "ask"
        elif label == cfg.bid_label:
            side = "bid"
        else:
            raise FormatError(f"side {label!r} is neither {cfg.ask_label!r} nor {cfg.bid_label!r}", line)
        level = _int_field(row[idx[2]], "level", line)
        price = _dec_field(row[idx[3]], "price", line)
        volume = _dec_field(row[idx[4]], "volume", line)

        if ts != cur_ts:
            if cur_ts is not None:
                yield flush()
                if ts <= cur_ts:
                    raise OrderingError(f"timestamp {ts} does not follow {cur_ts}", line)
            cur_ts, first_line, sides, problems = ts, line, {}, []
        if not 1 <= level <= cfg.levels:
            problems.append(ValidationError(f"{side} level {level} outside 1..{cfg.levels}", line, ts))
            continue
        book = sides.setdefault(side, {})
        if level in book:
            problems.append(ValidationError(f"duplicate {side} level {level}", line, ts))
            continue
        book[level] = (price, volume)
    if cur_ts is not None:
        yield flush()


def _iter_wide(reader, cfg: FormatConfig) -> Iterator[tuple[int, int, list, list, list]]:
    names = cfg.wide_columns()
    if cfg.has_header:
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError("empty input, expected a header", 1) from None
        idx = _locate(header, names, reader.line_num)
    else:
        idx = list(range(len(names)))
    width = max(idx) + 1
    n = cfg.levels
    prev = None
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < width:
            raise FormatError(f"expected at least {width} fields, got {len(row)}", line)
        ts = _int_field(row[idx[0]], "timestamp", line)
        if prev is not None and ts <= prev:
            raise OrderingError(f"timestamp {ts} does not follow {prev}", line)
        prev = ts
        books = []
        problems = []
        for s in range(2):
            levels = []
            for lv in range(n):
                pi = idx[1 + 2 * (s * n + lv)]
                p_txt, v_txt = row[pi].strip(), row[idx[2 + 2 * (s * n + lv)]].strip()
                if not p_txt and not v_txt:
                    continue
                if not p_txt or not v_txt:
                    problems.append(ValidationError(f"level {lv + 1} has only one of price/volume", line, ts))
                    continue
                levels.append((_dec_field(p_txt, "price", line), _dec_field(v_txt, "volume", line)))
            books.append(levels)
        yield line, ts, books[0], books[1], problems


def parse_snapshots(source, config: FormatConfig | None = None, max_gap: int = DEFAULT_MAX_GAP,
                    strict: bool = False, nominal_interval: int = NOMINAL_INTERVAL) -> SnapshotStream:
    """Parse a snapshot file into a validated, segmented :class:`SnapshotStream`.

    ``source`` may be ``bytes``, ``str``, a binary or text file object, or any
    iterable of text lines.  Structural problems (bad header, unparseable
    field, timestamps out of order) raise immediately.  Snapshots that parse
    but violate a book invariant are quarantined: they are left out of
    ``records`` and their :class:`~lobvol.errors.ValidationError` objects are
    kept in ``quarantine``.  With ``strict=True`` the first such violation is
    raised instead.
    """
    cfg = config or FormatConfig()
    reader = csv.reader(_text_lines(source), delimiter=cfg.delimiter)
    rows = _iter_long(reader, cfg) if cfg.layout == "long" else _iter_wide(reader, cfg)

    records: list[SnapshotRecord] = []
    quarantine: list[ValidationError] = []
    for line, ts, asks, bids, problems in rows:
        problems = problems + _check_book(ts, asks, bids, line)
        if problems:
            if strict:
                raise problems[0]
            quarantine.extend(problems)
            continue
        records.append(SnapshotRecord(ts, tuple(asks), tuple(bids)))

    stream = SnapshotStream(tuple(records), (), nominal_interval, max_gap, tuple(quarantine))
    return segment_stream(stream, max_gap)


def read_snapshots(paths, config: FormatConfig | None = None, max_gap: int = DEFAULT_MAX_GAP,
                   strict: bool = False) -> SnapshotStream:
    """Parse one file or several consecutive files (e.g. one per month) into one stream."""
    if isinstance(paths, (str, bytes)) or hasattr(paths, "__fspath__"):
        paths = [paths]
    parts = []
    for p in paths:
        with open(p, "rb") as fh:
            parts.append(parse_snapshots(fh, config, max_gap=max_gap, strict=strict))
    return concat_streams(parts, max_gap=max_gap)


def concat_streams(streams: Sequence[SnapshotStream], max_gap: int | None = None) -> SnapshotStream:
    if not streams:
        return segment_stream(SnapshotStream((), ()), max_gap or DEFAULT_MAX_GAP)
    records: list[SnapshotRecord] = []
    quarantine: list[ValidationError] = []
    for s in streams:
        if records and s.records and s.records[0].timestamp <= records[-1].timestamp:
            raise OrderingError(f"stream starting at {s.records[0].timestamp} overlaps previous stream")
        records.extend(s.records)
        quarantine.extend(s.quarantine)
    first = streams[0]
    merged = SnapshotStream(tuple(records), (), first.nominal_interval, first.max_gap, tuple(quarantine))
    return segment_stream(merged, first.max_gap if max_gap is None else max_gap)


def segment_stream(stream: SnapshotStream, max_gap: int) -> SnapshotStream:
    """Split ``stream`` wherever consecutive timestamps differ by more than ``max_gap`` seconds."""
    if max_gap < stream.nominal_interval:
        raise ParameterError(f"max_gap {max_gap}s is below the nominal interval {stream.nominal_interval}s")
    recs = stream.records
    segments = []
    start = 0
    for i in range(1, len(recs) + 1):
        if i == len(recs) or recs[i].timestamp - recs[i - 1].timestamp > max_gap:
            segments.append(Segment(start, i, recs[start].timestamp, recs[i - 1].timestamp))
            start = i
    return replace(stream, segments=tuple(segments), max_gap=max_gap)


# --------------------------------------------------------------------------
# writing


def decimal_text(value: Decimal) -> str:
    """Plain positional notation (never an exponent), keeping trailing zeros."""
    return format(value, "f")


def write_snapshots(stream: SnapshotStream, fh: IO[str], config: FormatConfig | None = None) -> None:
    """Serialize ``stream.records`` in the configured layout (decimals printed as parsed)."""
    cfg = config or FormatConfig()
    writer = csv.writer(fh, delimiter=cfg.delimiter, lineterminator="\n")
    if cfg.layout == "long":
        if cfg.has_header:
            writer.writerow(cfg.columns)
        for rec in stream.records:
            for label, levels in ((cfg.ask_label, rec.asks), (cfg.bid_label, rec.bids)):
                for lv, (price, volume) in enumerate(levels, 1):
                    writer.writerow([rec.timestamp, label, lv, decimal_text(price), decimal_text(volume)])
    else:
        if cfg.has_header:
            writer.writerow(cfg.wide_columns())
        for rec in stream.records:
            row = [rec.timestamp]
            for levels in (rec.asks, rec.bids):
                for lv in range(cfg.levels):
                    if lv < len(levels):
                        row.extend([decimal_text(levels[lv][0]), decimal_text(levels[lv][1])])
                    else:
                        row.extend(["", ""])
            writer.writerow(row)


def stream_index(stream: SnapshotStream) -> dict:
    """Summary written by ``lobvol ingest``: counts, segments and quarantined records."""
    return {
        "records": len(stream.records),
        "nominal_interval": stream.nominal_interval,
        "max_gap": stream.max_gap,
        "segments": [
            {"start": s.start, "stop": s.stop, "first_timestamp": s.first_timestamp,
             "last_timestamp": s.last_timestamp}
            for s in stream.segments
        ],
        "quarantined": [
            {"line": q.line, "timestamp": q.timestamp, "reason": q.reason} for q in stream.quarantine
        ],
    }


def write_index(stream: SnapshotStream, fh: IO[str]) -> None:
    json.dump(stream_index(stream), fh, indent=2, sort_keys=True)
    fh.write("\n")
