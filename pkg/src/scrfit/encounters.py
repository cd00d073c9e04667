"""Multi-session binary encounter histories and their summaries."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import TrapArray


@dataclass
class SessionBlock:
    """One session: y[i, j, k] is 1 when individual i was seen at trap j on occasion k."""

    session_id: str
    y: np.ndarray
    individual_ids: list[str]

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.uint8)
        if self.y.ndim != 3:
            raise ValueError("encounter array must be individuals x traps x occasions")
        if len(self.individual_ids) != self.y.shape[0]:
            raise ValueError("individual ids do not match encounter rows")
        if len(set(self.individual_ids)) != len(self.individual_ids):
            raise ValueError(f"duplicate individual ids in session {self.session_id}")
        if self.y.size and self.y.max() > 1:
            raise ValueError("encounters must be binary")
        if self.y.shape[0] and np.any(self.y.reshape(self.y.shape[0], -1).sum(axis=1) == 0):
            raise ValueError(f"session {self.session_id} contains an individual that was never detected")

    @property
    def n(self) -> int:
        return self.y.shape[0]


@dataclass
class EncounterData:
    sessions: list[SessionBlock]
    traps: TrapArray
    n_occasions: int

    def __post_init__(self):
        for s in self.sessions:
            if s.y.shape[1:] != (self.traps.n_traps, self.n_occasions):
                raise ValueError(
                    f"session {s.session_id} has shape {s.y.shape[1:]}, "
                    f"expected ({self.traps.n_traps}, {self.n_occasions})"
                )

    @property
    def n_sessions(self) -> int:
        return len(self.sessions)

    @property
    def session_ids(self) -> list[str]:
        return [s.session_id for s in self.sessions]

    def counts(self) -> list[int]:
        return [s.n for s in self.sessions]


@dataclass
class CaptureSummary:
    session_ids: list[str]
    n: list[int]
    total_detections: int
    trap_detections: np.ndarray
    mmdm_m: float
    mmdm_defined: bool
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "sessions": self.session_ids,
            "n": self.n,
            "total_detections": self.total_detections,
            "trap_detections": self.trap_detections.tolist(),
            "mmdm_m": self.mmdm_m if self.mmdm_defined else None,
            "mmdm_defined": self.mmdm_defined,
            "notes": self.notes,
        }


def _session_order(labels):
    try:
        nums = sorted({int(s) for s in labels})
    except ValueError:
        return sorted(set(labels))
    if nums and nums != list(range(nums[0], nums[-1] + 1)):
        raise ValueError(f"session labels are not contiguous: {nums}")
    return [str(s) for s in nums]


def ingest_encounters(records, traps: TrapArray, n_occasions: int | None = None,
                      sessions: list[str] | None = None) -> EncounterData:
    """Build binary encounter arrays from (user_id, trap_id, occasion, session) rows.

    Repeat posts by a user in the same trap and occasion collapse to a single
    detection. Individuals are indexed per session in sorted id order, so the
    result does not depend on row order.
    """
    rows = [(str(u), str(t), int(k), str(s)) for u, t, k, s in records]
    if not rows:
        raise ValueError("no encounter records")
    tindex = traps.index()
    unknown = sorted({t for _, t, _, _ in rows if t not in tindex})
    if unknown:
        raise ValueError(f"unknown trap ids: {', '.join(unknown)}")
    kmax = max(k for _, _, k, _ in rows)
    if n_occasions is None:
        n_occasions = kmax
    bad = sorted({k for _, _, k, _ in rows if k < 1 or k > n_occasions})
    if bad:
        raise ValueError(f"occasions outside 1..{n_occasions}: {bad}")

    if sessions is None:
        sessions = _session_order([s for *_, s in rows])
    else:
        sessions = [str(s) for s in sessions]
        missing = sorted({s for *_, s in rows} - set(sessions))
        if missing:
            raise ValueError(f"records reference undeclared sessions: {missing}")

    blocks = []
    for sid in sessions:
        hits = {(u, tindex[t], k - 1) for u, t, k, s in rows if s == sid}
        ids = sorted({u for u, _, _ in hits})
        pos = {u: i for i, u in enumerate(ids)}
        y = np.zeros((len(ids), traps.n_traps, n_occasions), dtype=np.uint8)
        for u, j, k in hits:
            y[pos[u], j, k] = 1
        blocks.append(SessionBlock(sid, y, ids))
    return EncounterData(blocks, traps, n_occasions)


def read_encounter_csv(path, traps: TrapArray, n_occasions=None, sessions=None) -> EncounterData:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader([ln for ln in fh if not ln.startswith("#")])
        need = {"user_id", "trap_id", "occasion", "session"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns user_id,trap_id,occasion,session")
        rows = [(r["user_id"], r["trap_id"], r["occasion"], r["session"]) for r in reader]
    if not rows:
        raise ValueError(f"{path}: no encounter records")
    return ingest_encounters(rows, traps, n_occasions, sessions)


def write_encounter_csv(data: EncounterData, path, header: str = "") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "trap_id", "occasion", "session"])
        for block in data.sessions:
            for i, j, k in zip(*np.nonzero(block.y)):
                w.writerow([block.individual_ids[i], data.traps.ids[j], k + 1, block.session_id])


def max_moves(data: EncounterData) -> list[float]:
    """Maximum pairwise distance between capture traps, per individual and session."""
    xy = data.traps.xy
    out = []
    for block in data.sessions:
        for row in block.y:
            where = np.flatnonzero(row.any(axis=1))
            if len(where) < 2:
                out.append(0.0)
                continue
            p = xy[where]
            d = np.sqrt(((p[:, None, :] - p[None, :, :]) ** 2).sum(-1))
            out.append(float(d.max()))
    return out


def mmdm(data: EncounterData) -> float:
    """Mean maximum distance moved, ignoring individuals that never moved.

    Captures are pooled over occasions within a session. Returns nan when no
    individual was caught at two distinct traps.
    """
    moves = [m for m in max_moves(data) if m > 0]
    if not moves:
        return math.nan
    return math.fsum(moves) / len(moves)


def summarize(data: EncounterData) -> CaptureSummary:
    trap_counts = np.zeros(data.traps.n_traps, dtype=int)
    total = 0
    for block in data.sessions:
        trap_counts += block.y.sum(axis=(0, 2)).astype(int)
        total += int(block.y.sum())
    m = mmdm(data)
    notes = [] if math.isfinite(m) else ["MMDM undefined: no individual detected at two distinct traps"]
    return CaptureSummary(data.session_ids, data.counts(), total, trap_counts, m, math.isfinite(m), notes)
