"""Half-open interval arithmetic and half-hour day-slot time labels.

A day is 48 half-hour slots; slot 18 starts at 9:00. Intervals are half-open
[start, end) throughout, in either slot units (ints) or hours (floats).
"""

from __future__ import annotations

import re

SLOTS_PER_DAY = 48


def slot_label(slot: int) -> str:
    """Render a slot boundary as a clock time, e.g. 18 -> '9:00', 19 -> '9:30'."""
    if not 0 <= slot <= SLOTS_PER_DAY:
        raise ValueError(f"slot {slot} out of range 0..{SLOTS_PER_DAY}")
    return f"{slot // 2}:{'30' if slot % 2 else '00'}"


def span_label(start: int, end: int) -> str:
    return f"{slot_label(start)}-{slot_label(end)}"


def slots_to_hours(intervals) -> list[tuple[float, float]]:
    return [(s / 2.0, e / 2.0) for s, e in intervals]


def merge_intervals(intervals) -> list[tuple[float, float]]:
    """Union of intervals as a sorted list of maximal disjoint intervals.

    Touching intervals are merged; zero- or negative-length inputs are invalid.
    """
    cleaned = []
    for s, e in intervals:
        if e <= s:
            raise ValueError(f"malformed interval ({s}, {e}): start must precede end")
        cleaned.append((float(s), float(e)))
    cleaned.sort()
    merged: list[tuple[float, float]] = []
    for s, e in cleaned:
        if merged and s <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], e))
        else:
            merged.append((s, e))
    return merged


def total_length(intervals) -> float:
    return sum(e - s for s, e in merge_intervals(intervals))


def intersection_length(a, b) -> float:
    ma, mb = merge_intervals(a), merge_intervals(b)
    i = j = 0
    total = 0.0
    while i < len(ma) and j < len(mb):
        lo = max(ma[i][0], mb[j][0])
        hi = min(ma[i][1], mb[j][1])
        if hi > lo:
            total += hi - lo
        if ma[i][1] <= mb[j][1]:
            i += 1
        else:
            j += 1
    return total


_TIME_SPAN_RE = re.compile(
    r"(\d{1,2}):(\d{2})\s*(?:-|–|—|~|to|until)\s*(\d{1,2}):(\d{2})", re.IGNORECASE
)


def parse_time_spans(text: str) -> list[tuple[float, float]]:
    """Extract 'H:MM-H:MM' style spans from free text as hour floats.

    Spans with end <= start are dropped (no overnight wrap support).
    """
    out = []
    for h1, m1, h2, m2 in _TIME_SPAN_RE.findall(text):
        start = int(h1) + int(m1) / 60.0
        end = int(h2) + int(m2) / 60.0
        if end > start:
            out.append((start, end))
    return out
