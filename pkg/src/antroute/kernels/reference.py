"""Pure-Python kernels: frame codec and per-node seed memory.

These are the hot inner loops of the simulator. A Cython twin (_fast.pyx)
implements the same contracts; antroute.kernels picks one at import time.
Behavior must stay bit-identical between the two.
"""

from __future__ import annotations

import struct

IMPLEMENTATION = "reference"

# observe() outcomes
ACTION_NEW = 0  # first sight of (r, direction): store and rebroadcast
ACTION_DUPLICATE = 1  # known, counter not an improvement: store transmitter only
ACTION_DUPLICATE_LOWER = 2  # known, strictly lower counter: rebroadcast again
ACTION_CONJUGATE = 3  # opposite direction already held: a match is possible

_HEAD = struct.Struct(">B32sIQQQ")
_ID = struct.Struct(">Q")
_PLAIN_LEN = _HEAD.size  # 61
_WITH_ID_LEN = _HEAD.size + _ID.size  # 69

_U32_MAX = 2**32 - 1
_U64_MAX = 2**64 - 1


def pack_frame(kind, direction, r, counter, amount, max_fee, current_fee, matching_id):
    """Serialize seed fields into the canonical big-endian frame."""
    if kind < 0 or kind > 2:
        raise ValueError(f"bad kind {kind}")
    if direction < 0 or direction > 1:
        raise ValueError(f"bad direction {direction}")
    if len(r) != 32:
        raise ValueError(f"r must be 32 bytes, got {len(r)}")
    if counter < 0 or counter > _U32_MAX:
        raise ValueError(f"counter out of range: {counter}")
    for name, value in (
        ("amount", amount),
        ("max_fee", max_fee),
        ("current_fee", current_fee),
    ):
        if value < 0 or value > _U64_MAX:
            raise ValueError(f"{name} out of range: {value}")
    tag = kind * 2 + direction
    head = _HEAD.pack(tag, r, counter, amount, max_fee, current_fee)
    if kind == 0:
        if matching_id is not None:
            raise ValueError("pheromone frames carry no matching_id")
        return head
    if matching_id is None:
        raise ValueError("matched/confirmed frames require a matching_id")
    if matching_id < 0 or matching_id > _U64_MAX:
        raise ValueError(f"matching_id out of range: {matching_id}")
    return head + _ID.pack(matching_id)


def unpack_frame(frame):
    """Parse a canonical frame into its field tuple; reject malformed input."""
    n = len(frame)
    if n != _PLAIN_LEN and n != _WITH_ID_LEN:
        raise ValueError(f"bad frame length {n}")
    tag, r, counter, amount, max_fee, current_fee = _HEAD.unpack_from(frame, 0)
    if tag > 5:
        raise ValueError(f"unknown tag byte 0x{tag:02x}")
    kind = tag >> 1
    direction = tag & 1
    if kind == 0:
        if n != _PLAIN_LEN:
            raise ValueError("pheromone frame has trailing bytes")
        matching_id = None
    else:
        if n != _WITH_ID_LEN:
            raise ValueError(f"{n}-byte frame lacks a matching_id")
        (matching_id,) = _ID.unpack_from(frame, _PLAIN_LEN)
    return kind, direction, r, counter, amount, max_fee, current_fee, matching_id


class _Entry:
    __slots__ = (
        "is_origin",
        "min_counter",
        "amount",
        "max_fee",
        "first_seen",
        "best_sender",
        "best_counter",
        "best_fee",
        "best_seq",
        "transmitters",
        "sent",
    )

    def __init__(self, is_origin, min_counter, amount, max_fee, first_seen):
        self.is_origin = is_origin
        self.min_counter = min_counter
        self.amount = amount
        self.max_fee = max_fee
        self.first_seen = first_seen
        self.best_sender = -1
        self.best_counter = -1
        self.best_fee = 0
        self.best_seq = -1
        self.transmitters = []  # (sender, counter, fee, time)
        self.sent = []  # (neighbor, fee) pairs already forwarded


class Mempool:
    """Per-node memory of seen requests, keyed by (r, direction).

    Tracks the minimum counter seen per entry, the best transmitter
    (lowest counter, earliest arrival) and forwarding history. observe()
    classifies each arrival into one of the ACTION_* outcomes that drive
    the rebroadcast/match logic.
    """

    def __init__(self):
        self._entries = {}
        self._seq = 0

    def __len__(self):
        return len(self._entries)

    @staticmethod
    def _key(r, direction):
        return r + bytes((direction,))

    def add_origin(self, r, direction, counter, amount, max_fee, now):
        """Register a request this node itself originated."""
        key = self._key(r, direction)
        if key in self._entries:
            raise ValueError("origin entry already present")
        self._entries[key] = _Entry(True, counter, amount, max_fee, now)

    def observe(self, r, direction, sender, counter, fee, amount, max_fee, now):
        """Record an arriving seed; return the ACTION_* classification."""
        key = self._key(r, direction)
        entry = self._entries.get(key)
        if entry is None:
            conj = self._key(r, 1 - direction)
            entry = _Entry(False, counter, amount, max_fee, now)
            self._record(entry, sender, counter, fee, now)
            self._entries[key] = entry
            return ACTION_CONJUGATE if conj in self._entries else ACTION_NEW
        improved = counter < entry.min_counter
        if improved:
            entry.min_counter = counter
        self._record(entry, sender, counter, fee, now)
        return ACTION_DUPLICATE_LOWER if improved else ACTION_DUPLICATE

    def _record(self, entry, sender, counter, fee, now):
        seq = self._seq
        self._seq = seq + 1
        entry.transmitters.append((sender, counter, fee, now))
        if entry.best_seq < 0 or counter < entry.best_counter:
            entry.best_sender = sender
            entry.best_counter = counter
            entry.best_fee = fee
            entry.best_seq = seq

    def contains(self, r, direction):
        return self._key(r, direction) in self._entries

    def is_origin(self, r, direction):
        entry = self._entries.get(self._key(r, direction))
        return entry is not None and entry.is_origin

    def min_counter(self, r, direction):
        return self._entries[self._key(r, direction)].min_counter

    def entry_info(self, r, direction):
        """(is_origin, min_counter, amount, max_fee, first_seen, n_transmitters)."""
        e = self._entries.get(self._key(r, direction))
        if e is None:
            return None
        return (
            e.is_origin,
            e.min_counter,
            e.amount,
            e.max_fee,
            e.first_seen,
            len(e.transmitters),
        )

    def best_transmitter(self, r, direction):
        """(sender, counter, fee) of the lowest-counter, earliest arrival."""
        e = self._entries.get(self._key(r, direction))
        if e is None or e.best_seq < 0:
            return None
        return (e.best_sender, e.best_counter, e.best_fee)

    def transmitters(self, r, direction):
        e = self._entries.get(self._key(r, direction))
        return [] if e is None else list(e.transmitters)

    def record_sent(self, r, direction, neighbor, fee):
        self._entries[self._key(r, direction)].sent.append((neighbor, fee))

    def sent_to(self, r, direction):
        e = self._entries.get(self._key(r, direction))
        return [] if e is None else list(e.sent)

    def oldest_first_seen(self):
        """Earliest first_seen among live entries, or None when empty."""
        if not self._entries:
            return None
        return min(e.first_seen for e in self._entries.values())

    def sweep(self, cutoff):
        """Drop entries first seen before the cutoff; return how many."""
        stale = [k for k, e in self._entries.items() if e.first_seen < cutoff]
        for key in stale:
            del self._entries[key]
        return len(stale)
