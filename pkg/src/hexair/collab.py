"""Collaborative airspace allocation: timed exclusive cell reservations.

Each aircraft owns a chain of reservations; on entering a cell it requests
one neighbour cell for the following window.  Requests arriving at the same
engine tick are processed in ascending aircraft id, which realizes the
priority order.  An aircraft whose candidates are all taken re-reserves its
current cell and flies a holding pattern.

Grant rule: a window on a cell is grantable only when it overlaps no
existing reservation AND the cell's latest reservation (if any) belongs to
an owner that has already committed onward (holds a later reservation
somewhere else) or has landed.  The second clause keeps every aircraft's
holding-extension always available, so the protocol can never strand an
aircraft without a legal contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .lattice import AirspaceConfig, hex_distance, neighbors

_EPS = 1e-6


@dataclass
class Reservation:
    cell: int
    owner: int
    t_start_s: float
    t_end_s: float

    def overlaps(self, t0: float, t1: float) -> bool:
        return self.t_start_s < t1 - _EPS and self.t_end_s > t0 + _EPS


class ReservationLedger:
    """Single-owner mutable state inside one scenario's engine."""

    def __init__(self) -> None:
        self.by_cell: dict[int, list[Reservation]] = {}
        self.by_owner: dict[int, list[Reservation]] = {}
        self.landed: set[int] = set()

    # -- queries ------------------------------------------------------------

    def cell_reservations(self, cell: int) -> list[Reservation]:
        return self.by_cell.get(cell, [])

    def chain_tail(self, owner: int) -> Optional[Reservation]:
        chain = self.by_owner.get(owner)
        return chain[-1] if chain else None

    def owner_committed_beyond(self, res: Reservation) -> bool:
        """Whether ``res.owner`` holds a reservation after ``res`` (or landed)."""
        if res.owner in self.landed:
            return True
        tail = self.chain_tail(res.owner)
        return tail is not None and tail is not res

    def grantable(self, cell: int, t0: float, t1: float, requester: int) -> bool:
        existing = self.by_cell.get(cell, [])
        for r in existing:
            if r.overlaps(t0, t1):
                return False
        if existing:
            last = max(existing, key=lambda r: r.t_end_s)
            if last.owner != requester and not self.owner_committed_beyond(last):
                return False
        return True

    # -- mutations ----------------------------------------------------------

    def grant(self, cell: int, owner: int, t0: float, t1: float) -> Reservation:
        res = Reservation(cell, owner, t0, t1)
        self.by_cell.setdefault(cell, []).append(res)
        self.by_cell[cell].sort(key=lambda r: r.t_start_s)
        self.by_owner.setdefault(owner, []).append(res)
        return res

    def extend_current(self, owner: int, duration_s: float) -> Reservation:
        """Re-reserve the owner's current cell for one more window (the hold)."""
        tail = self.chain_tail(owner)
        if tail is None:
            raise ValueError(f"aircraft {owner} holds no reservation to extend")
        for r in self.by_cell.get(tail.cell, []):
            if r is not tail and r.overlaps(tail.t_end_s, tail.t_end_s + duration_s):
                raise ValueError(
                    f"holding extension blocked on cell {tail.cell}: protocol invariant broken")
        return self.grant(tail.cell, owner, tail.t_end_s, tail.t_end_s + duration_s)

    def release_on_arrival(self, owner: int, now_s: float) -> None:
        """Truncate the owner's current reservation at ``now`` and drop future ones."""
        self.landed.add(owner)
        chain = self.by_owner.get(owner, [])
        keep = []
        for r in chain:
            if r.t_start_s >= now_s - _EPS:
                self.by_cell[r.cell].remove(r)
            else:
                if r.t_end_s > now_s:
                    r.t_end_s = now_s
                keep.append(r)
        self.by_owner[owner] = keep

    def dump_rows(self) -> list[tuple[int, int, float, float]]:
        rows = []
        for cell in sorted(self.by_cell):
            for r in self.by_cell[cell]:
                rows.append((r.cell, r.owner, r.t_start_s, r.t_end_s))
        return rows


@dataclass(frozen=True)
class RequestOutcome:
    reservation: Reservation
    held: bool  # True when the grant is a holding extension of the current cell


def candidate_cells(current_cell: int, destination: int, cfg: AirspaceConfig,
                    preferred: Sequence[int] = ()) -> list[int]:
    """Neighbour candidates, closest-to-destination first, preferred cells up front."""
    nbrs = neighbors(current_cell, cfg)
    ranked = sorted(nbrs, key=lambda c: (hex_distance(c, destination, cfg), c))
    out = [c for c in preferred if c in nbrs]
    out.extend(c for c in ranked if c not in out)
    return out


def request_next_cell(own: int, current: Reservation, destination: int,
                      ledger: ReservationLedger, cfg: AirspaceConfig,
                      t_cell_s: float,
                      preferred: Sequence[int] = ()) -> RequestOutcome:
    """Allocate the next cell for the window after ``current``; hold when blocked."""
    t0 = current.t_end_s
    t1 = t0 + t_cell_s
    for cell in candidate_cells(current.cell, destination, cfg, preferred):
        if ledger.grantable(cell, t0, t1, own):
            return RequestOutcome(ledger.grant(cell, own, t0, t1), held=False)
    return RequestOutcome(ledger.extend_current(own, t_cell_s), held=True)


def intruder_entry(intr: int, origin: int, ledger: ReservationLedger,
                   now_s: float, t_cell_s: float) -> Optional[Reservation]:
    """One entry attempt: the origin cell must be free for a full window from now.

    Returns the granted reservation, or None when the attempt fails and the
    caller should retry later (the 40-second re-attempt rule lives in the
    engine's event loop).
    """
    if ledger.grantable(origin, now_s, now_s + t_cell_s, intr):
        return ledger.grant(origin, intr, now_s, now_s + t_cell_s)
    return None
