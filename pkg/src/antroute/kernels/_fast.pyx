# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled kernels: frame codec and per-node seed memory.

Mirrors kernels/reference.py exactly; the differential tests in
tests/test_kernels.py hold the two implementations to identical behavior.
"""

IMPLEMENTATION = "fast"

ACTION_NEW = 0
ACTION_DUPLICATE = 1
ACTION_DUPLICATE_LOWER = 2
ACTION_CONJUGATE = 3

cdef unsigned long long _U32_MAX = 0xFFFFFFFF

cdef inline void _put_u32(unsigned char *buf, unsigned long long v):
    buf[0] = (v >> 24) & 0xFF
    buf[1] = (v >> 16) & 0xFF
    buf[2] = (v >> 8) & 0xFF
    buf[3] = v & 0xFF

cdef inline void _put_u64(unsigned char *buf, unsigned long long v):
    cdef int i
    for i in range(8):
        buf[i] = (v >> (56 - 8 * i)) & 0xFF

cdef inline unsigned long long _get_u32(const unsigned char *buf):
    return (
        (<unsigned long long> buf[0] << 24)
        | (<unsigned long long> buf[1] << 16)
        | (<unsigned long long> buf[2] << 8)
        | <unsigned long long> buf[3]
    )

cdef inline unsigned long long _get_u64(const unsigned char *buf):
    cdef unsigned long long v = 0
    cdef int i
    for i in range(8):
        v = (v << 8) | <unsigned long long> buf[i]
    return v


def pack_frame(kind, direction, r, counter, amount, max_fee, current_fee, matching_id):
    """Serialize seed fields into the canonical big-endian frame."""
    if kind < 0 or kind > 2:
        raise ValueError(f"bad kind {kind}")
    if direction < 0 or direction > 1:
        raise ValueError(f"bad direction {direction}")
    if type(r) is not bytes:
        r = bytes(r)
    if len(r) != 32:
        raise ValueError(f"r must be 32 bytes, got {len(r)}")
    if counter < 0 or counter > 0xFFFFFFFF:
        raise ValueError(f"counter out of range: {counter}")
    if amount < 0 or amount > 0xFFFFFFFFFFFFFFFF:
        raise ValueError(f"amount out of range: {amount}")
    if max_fee < 0 or max_fee > 0xFFFFFFFFFFFFFFFF:
        raise ValueError(f"max_fee out of range: {max_fee}")
    if current_fee < 0 or current_fee > 0xFFFFFFFFFFFFFFFF:
        raise ValueError(f"current_fee out of range: {current_fee}")

    cdef int ikind = kind
    cdef bint with_id = ikind != 0
    if not with_id:
        if matching_id is not None:
            raise ValueError("pheromone frames carry no matching_id")
    else:
        if matching_id is None:
            raise ValueError("matched/confirmed frames require a matching_id")
        if matching_id < 0 or matching_id > 0xFFFFFFFFFFFFFFFF:
            raise ValueError(f"matching_id out of range: {matching_id}")

    cdef bytearray out = bytearray(69 if with_id else 61)
    cdef unsigned char *buf = out
    cdef const unsigned char *rp = r
    cdef int i
    buf[0] = <unsigned char> (ikind * 2 + <int> direction)
    for i in range(32):
        buf[1 + i] = rp[i]
    _put_u32(buf + 33, <unsigned long long> counter)
    _put_u64(buf + 37, <unsigned long long> amount)
    _put_u64(buf + 45, <unsigned long long> max_fee)
    _put_u64(buf + 53, <unsigned long long> current_fee)
    if with_id:
        _put_u64(buf + 61, <unsigned long long> matching_id)
    return bytes(out)


def unpack_frame(frame):
    """Parse a canonical frame into its field tuple; reject malformed input."""
    if type(frame) is not bytes:
        frame = bytes(frame)
    cdef Py_ssize_t n = len(frame)
    if n != 61 and n != 69:
        raise ValueError(f"bad frame length {n}")
    cdef const unsigned char *buf = frame
    cdef int tag = buf[0]
    if tag > 5:
        raise ValueError(f"unknown tag byte 0x{tag:02x}")
    cdef int kind = tag >> 1
    cdef int direction = tag & 1
    if kind == 0:
        if n != 61:
            raise ValueError("pheromone frame has trailing bytes")
        matching_id = None
    else:
        if n != 69:
            raise ValueError(f"{n}-byte frame lacks a matching_id")
        matching_id = _get_u64(buf + 61)
    return (
        kind,
        direction,
        frame[1:33],
        _get_u32(buf + 33),
        _get_u64(buf + 37),
        _get_u64(buf + 45),
        _get_u64(buf + 53),
        matching_id,
    )


cdef class _Entry:
    cdef public bint is_origin
    cdef public object min_counter
    cdef public object amount
    cdef public object max_fee
    cdef public object first_seen
    cdef public long long best_sender
    cdef public object best_counter
    cdef public object best_fee
    cdef public long long best_seq
    cdef public list transmitters
    cdef public list sent

    def __cinit__(self, bint is_origin, min_counter, amount, max_fee, first_seen):
        self.is_origin = is_origin
        self.min_counter = min_counter
        self.amount = amount
        self.max_fee = max_fee
        self.first_seen = first_seen
        self.best_sender = -1
        self.best_counter = -1
        self.best_fee = 0
        self.best_seq = -1
        self.transmitters = []
        self.sent = []


cdef class Mempool:
    """Per-node memory of seen requests, keyed by (r, direction).

    Same contract as the reference implementation: tracks minimum counter,
    best transmitter (lowest counter, earliest arrival) and forwarding
    history per entry; observe() classifies arrivals into ACTION_* codes.
    """

    cdef dict _entries
    cdef long long _seq

    def __cinit__(self):
        self._entries = {}
        self._seq = 0

    def __len__(self):
        return len(self._entries)

    @staticmethod
    def _key(r, direction):
        return r + bytes((direction,))

    def add_origin(self, r, direction, counter, amount, max_fee, now):
        """Register a request this node itself originated."""
        key = r + bytes((direction,))
        if key in self._entries:
            raise ValueError("origin entry already present")
        self._entries[key] = _Entry(True, counter, amount, max_fee, now)

    def observe(self, r, direction, sender, counter, fee, amount, max_fee, now):
        """Record an arriving seed; return the ACTION_* classification."""
        key = r + bytes((direction,))
        cdef _Entry entry
        obj = self._entries.get(key)
        if obj is None:
            conj = r + bytes((1 - direction,))
            entry = _Entry(False, counter, amount, max_fee, now)
            self._record(entry, sender, counter, fee, now)
            self._entries[key] = entry
            return ACTION_CONJUGATE if conj in self._entries else ACTION_NEW
        entry = <_Entry> obj
        cdef bint improved = counter < entry.min_counter
        if improved:
            entry.min_counter = counter
        self._record(entry, sender, counter, fee, now)
        return ACTION_DUPLICATE_LOWER if improved else ACTION_DUPLICATE

    cdef void _record(self, _Entry entry, sender, counter, fee, now):
        cdef long long seq = self._seq
        self._seq = seq + 1
        entry.transmitters.append((sender, counter, fee, now))
        if entry.best_seq < 0 or counter < entry.best_counter:
            entry.best_sender = sender
            entry.best_counter = counter
            entry.best_fee = fee
            entry.best_seq = seq

    def contains(self, r, direction):
        return (r + bytes((direction,))) in self._entries

    def is_origin(self, r, direction):
        obj = self._entries.get(r + bytes((direction,)))
        if obj is None:
            return False
        return (<_Entry> obj).is_origin

    def min_counter(self, r, direction):
        return (<_Entry> self._entries[r + bytes((direction,))]).min_counter

    def entry_info(self, r, direction):
        """(is_origin, min_counter, amount, max_fee, first_seen, n_transmitters)."""
        obj = self._entries.get(r + bytes((direction,)))
        if obj is None:
            return None
        cdef _Entry e = <_Entry> obj
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
        obj = self._entries.get(r + bytes((direction,)))
        if obj is None:
            return None
        cdef _Entry e = <_Entry> obj
        if e.best_seq < 0:
            return None
        return (e.best_sender, e.best_counter, e.best_fee)

    def transmitters(self, r, direction):
        obj = self._entries.get(r + bytes((direction,)))
        if obj is None:
            return []
        return list((<_Entry> obj).transmitters)

    def record_sent(self, r, direction, neighbor, fee):
        (<_Entry> self._entries[r + bytes((direction,))]).sent.append((neighbor, fee))

    def sent_to(self, r, direction):
        obj = self._entries.get(r + bytes((direction,)))
        if obj is None:
            return []
        return list((<_Entry> obj).sent)

    def oldest_first_seen(self):
        """Earliest first_seen among live entries, or None when empty."""
        if not self._entries:
            return None
        best = None
        cdef _Entry e
        for obj in self._entries.values():
            e = <_Entry> obj
            if best is None or e.first_seen < best:
                best = e.first_seen
        return best

    def sweep(self, cutoff):
        """Drop entries first seen before the cutoff; return how many."""
        cdef list stale = []
        cdef _Entry e
        for key, obj in self._entries.items():
            e = <_Entry> obj
            if e.first_seen < cutoff:
                stale.append(key)
        for key in stale:
            del self._entries[key]
        return len(stale)
