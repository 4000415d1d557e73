"""Independent brute-force oracles used to cross-check the production code.

Everything here is written from the problem statement, not from the library
implementation: different traversals, different data layouts. These stay dumb
on purpose.
"""

from __future__ import annotations

import itertools

import numpy as np

from asymagents.intervals import SLOTS_PER_DAY


def brute_visible(corpus, who):
    """Visibility by full scan over every message."""
    out = [m for m in corpus.iter_messages() if m.sender == who or m.receiver == who]
    return sorted(out, key=lambda m: (m.session_id, m.seq))


def naive_min_deletions(sched_a, sched_b) -> int:
    """Minimum deletions by enumerating subsets of ALL intervals, smallest first."""
    spans = [(a.start, a.end, 0) for a in sched_a.assignments] + [
        (a.start, a.end, 1) for a in sched_b.assignments
    ]

    def conflict_free(removed: set[int]) -> bool:
        kept = [s for i, s in enumerate(spans) if i not in removed]
        for i in range(len(kept)):
            for j in range(i + 1, len(kept)):
                si, sj = kept[i], kept[j]
                if si[2] != sj[2] and si[0] < sj[1] and sj[0] < si[1]:
                    return False
        return True

    n = len(spans)
    for k in range(n + 1):
        for combo in itertools.combinations(range(n), k):
            if conflict_free(set(combo)):
                return k
    return n


def brute_longest_names(schedules) -> set[str]:
    pairs = [(a.activity, a.end - a.start) for s in schedules for a in s.assignments]
    longest = max(d for _, d in pairs)
    return {name for name, d in pairs if d == longest}


def brute_common_free(schedules) -> list[tuple[int, int]]:
    """AND-scan of all 48-slot vectors, then maximal runs."""
    free = []
    for t in range(SLOTS_PER_DAY):
        free.append(all(not s.time_vector[t] for s in schedules))
    out = []
    start = None
    for t in range(SLOTS_PER_DAY + 1):
        if t < SLOTS_PER_DAY and free[t]:
            if start is None:
                start = t
        elif start is not None:
            out.append((start, t))
            start = None
    return out


def slot_audit(world) -> list[str]:
    """Exhaustive per-slot audit of a schedule world, independent of the
    generator's own audit.
    """
    problems = []
    routine_windows = {a.name: a.start_window for a in world.pools.routines}
    multi_spans: dict[str, set] = {}
    for person, sched in world.schedules.items():
        slot_owners = [[] for _ in range(SLOTS_PER_DAY)]
        for a in sched.assignments:
            if a.start < 0 or a.end > SLOTS_PER_DAY or a.start >= a.end:
                problems.append(f"{person}: {a.activity} bounds")
            for t in range(max(a.start, 0), min(a.end, SLOTS_PER_DAY)):
                slot_owners[t].append(a.activity)
        for t in range(SLOTS_PER_DAY):
            if len(slot_owners[t]) > 1:
                problems.append(f"{person}: slot {t} double-booked {slot_owners[t]}")
            if bool(slot_owners[t]) != sched.time_vector[t]:
                problems.append(f"{person}: slot {t} vector mismatch")
        for a in sched.assignments:
            if a.activity in routine_windows:
                lo, hi = routine_windows[a.activity]
                if not lo <= a.start <= hi:
                    problems.append(f"{person}: routine {a.activity} outside window")
            if a.co_participants:
                multi_spans.setdefault(a.activity, set()).add((a.start, a.end))
    for name, spans in multi_spans.items():
        if len(spans) != 1:
            problems.append(f"{name}: spans differ {sorted(spans)}")
    return problems


def brute_clear_query(messages, keywords, window, limit):
    """Reference keyword+window retrieval over an owner's message list.

    messages must already be the owner's visible list in (session, seq) order.
    """
    keywords = [k.lower() for k in keywords]
    per_session: dict[str, list] = {}
    for m in messages:
        per_session.setdefault(m.session_id, []).append(m)
    picked = []
    for sid, msgs in per_session.items():
        for pos, m in enumerate(msgs):
            if any(kw in m.text.lower() for kw in keywords):
                for p in range(max(0, pos - window), min(len(msgs), pos + window + 1)):
                    picked.append(msgs[p])
    unique = {(m.session_id, m.seq): m for m in picked}
    ordered = sorted(unique.values(), key=lambda m: (m.session_id, m.seq))
    return ordered[:limit]


def brute_topk(session_ids, vectors, query_vec, k):
    """Cosine ranking by numpy matrix product, ties by ascending session id."""
    scores = np.asarray(vectors) @ np.asarray(query_vec)
    order = sorted(range(len(session_ids)), key=lambda i: (-scores[i], session_ids[i]))
    return [(session_ids[i], float(scores[i])) for i in order[:k]]
