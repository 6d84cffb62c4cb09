import sys

import numpy as np
import pytest


def snapshot_csv(snapshots):
    """Long-layout CSV text for ``[(ts, asks, bids), ...]`` with (price, volume) string pairs."""
    lines = ["timestamp,side,level,price,volume"]
    for ts, asks, bids in snapshots:
        for side, levels in (("ask", asks), ("bid", bids)):
            for lv, (p, v) in enumerate(levels, 1):
                lines.append(f"{ts},{side},{lv},{p},{v}")
    return "\n".join(lines) + "\n"


def simple_book(ts, ask_vol="1.0", bid_vol="2.0", ask_px="101", bid_px="99"):
    return (ts, [(ask_px, ask_vol), (str(int(ask_px) + 1), "5")], [(bid_px, bid_vol), (str(int(bid_px) - 1), "7")])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_stream_csv():
    """A 3-segment synthetic book with random volumes and occasional price moves."""
    gen = np.random.default_rng(99)
    snaps = []
    t = 1_000_000
    for seg_len in (400, 250, 300):
        for _ in range(seg_len):
            if gen.random() < 0.08:
                t += 10  # a single missed poll stays inside the segment
            books = simple_book(
                t,
                ask_vol=f"{gen.choice([0.5, 1, 2, 10]) * gen.integers(1, 4):.8f}",
                bid_vol=f"{gen.choice([0.1, 1, 5]) * gen.integers(1, 3):.8f}",
                ask_px=str(100 + int(gen.integers(0, 2))),
                bid_px=str(98 - int(gen.integers(0, 2))),
            )
            snaps.append(books)
            t += 10
        t += 5000
    return snapshot_csv(snaps)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS):
        terminalreporter.write_line(line)
