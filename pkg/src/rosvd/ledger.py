"""Append-only, hash-chained device registry.

Journal format: one record per line, ten tab-separated fields in fixed order::

    index timestamp kind device_id auth_hash payload_hash stoch_hash tx_limit prev_hash record_hash

Integers are canonical decimal, digests lowercase hex.  ``record_hash`` is the
SHA-256 of the first nine fields exactly as written (tab-joined, UTF-8), and
``prev_hash`` repeats the predecessor's ``record_hash`` (32 zero bytes for the
first record).  Writers hold an exclusive ``flock`` on the journal and fsync
before returning.
"""

from __future__ import annotations

import fcntl
import hashlib
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .errors import (
    BudgetExhaustedError,
    DuplicateRegistrationError,
    JournalParseError,
    JournalWriteError,
    LedgerError,
    NotRegisteredError,
)

ZERO_DIGEST = bytes(32)
KINDS = ("register", "mark", "transfer")
SPENDING_KINDS = ("mark", "transfer")
N_FIELDS = 10

_INT = re.compile(r"0|[1-9][0-9]*")
_HEX = re.compile(r"[0-9a-f]{64}")
_DEVICE_ID = re.compile(r"[\x21-\x7e]{1,128}")


def _check_device_id(device_id: str) -> None:
    if not _DEVICE_ID.fullmatch(device_id):
        raise LedgerError(f"device id must be 1-128 printable non-space ASCII characters, got {device_id!r}")


def _check_digest(name: str, value: bytes) -> bytes:
    value = bytes(value)
    if len(value) != 32:
        raise LedgerError(f"{name} must be 32 bytes, got {len(value)}")
    return value


@dataclass(frozen=True)
class LedgerRecord:
    index: int
    timestamp: int
    kind: str
    device_id: str
    auth_hash: bytes
    payload_hash: bytes
    stoch_hash: bytes
    tx_limit: int
    prev_hash: bytes
    record_hash: bytes

    def body(self) -> str:
        return "\t".join(
            [
                str(self.index),
                str(self.timestamp),
                self.kind,
                self.device_id,
                self.auth_hash.hex(),
                self.payload_hash.hex(),
                self.stoch_hash.hex(),
                str(self.tx_limit),
                self.prev_hash.hex(),
            ]
        )

    def line(self) -> bytes:
        return f"{self.body()}\t{self.record_hash.hex()}\n".encode()

    @classmethod
    def seal(cls, index, timestamp, kind, device_id, auth_hash, payload_hash, stoch_hash, tx_limit, prev_hash):
        draft = cls(index, timestamp, kind, device_id, auth_hash, payload_hash, stoch_hash, tx_limit, prev_hash, b"")
        return cls(**{**draft.__dict__, "record_hash": hashlib.sha256(draft.body().encode()).digest()})


@dataclass(frozen=True)
class TraceResult:
    device_id: str | None
    record_index: int | None
    remaining_budget: int | None

    @property
    def matched(self) -> bool:
        return self.device_id is not None


@dataclass(frozen=True)
class ChainStatus:
    ok: bool
    first_bad_index: int | None = None
    reason: str = ""
    byte_offset: int | None = None

    def __bool__(self) -> bool:
        return self.ok


def _parse_line(raw: bytes, index: int, offset: int) -> LedgerRecord:
    """Strictly parse one journal line (including its trailing newline)."""
    if not raw.endswith(b"\n"):
        raise JournalParseError("unterminated record", offset, index)
    try:
        text = raw[:-1].decode("ascii")
    except UnicodeDecodeError:
        raise JournalParseError("non-ASCII bytes in record", offset, index) from None
    fields = text.split("\t")
    if len(fields) != N_FIELDS:
        raise JournalParseError(f"expected {N_FIELDS} fields, found {len(fields)}", offset, index)
    idx, ts, kind, device_id, h1, payload, h2, limit, prev, rec = fields
    for name, value in (("index", idx), ("timestamp", ts), ("tx_limit", limit)):
        if not _INT.fullmatch(value):
            raise JournalParseError(f"malformed {name} {value!r}", offset, index)
    for name, value in (("auth_hash", h1), ("payload_hash", payload), ("stoch_hash", h2), ("prev_hash", prev), ("record_hash", rec)):
        if not _HEX.fullmatch(value):
            raise JournalParseError(f"malformed {name}", offset, index)
    if kind not in KINDS:
        raise JournalParseError(f"unknown record kind {kind!r}", offset, index)
    if not _DEVICE_ID.fullmatch(device_id):
        raise JournalParseError("malformed device id", offset, index)
    return LedgerRecord(
        int(idx), int(ts), kind, device_id, bytes.fromhex(h1), bytes.fromhex(payload),
        bytes.fromhex(h2), int(limit), bytes.fromhex(prev), bytes.fromhex(rec),
    )


def _split_lines(data: bytes):
    offset = 0
    index = 0
    while offset < len(data):
        end = data.find(b"\n", offset)
        end = len(data) if end < 0 else end + 1
        yield index, offset, data[offset:end]
        offset = end
        index += 1


def check_journal(data: bytes) -> ChainStatus:
    """Check every chain invariant of a journal image; never raises on bad content."""
    prev = ZERO_DIGEST
    for index, offset, raw in _split_lines(data):
        try:
            rec = _parse_line(raw, index, offset)
        except JournalParseError as exc:
            return ChainStatus(False, index, str(exc), offset)
        if rec.index != index:
            return ChainStatus(False, index, f"index {rec.index} out of sequence", offset)
        if rec.prev_hash != prev:
            return ChainStatus(False, index, "prev_hash does not match predecessor", offset)
        body = raw[: raw.rindex(b"\t")]
        if hashlib.sha256(body).digest() != rec.record_hash:
            return ChainStatus(False, index, "record_hash mismatch", offset)
        prev = rec.record_hash
    return ChainStatus(True)


def parse_journal(data: bytes) -> list[LedgerRecord]:
    return [_parse_line(raw, index, offset) for index, offset, raw in _split_lines(data)]


class Ledger:
    """Registry backed by a journal file, or by memory when ``path`` is None."""

    def __init__(self, path=None, *, clock: Callable[[], float] = time.time):
        self.path = Path(path) if path is not None else None
        self._clock = clock
        self._lock = threading.Lock()
        self._memory = bytearray()

    # -- reading ------------------------------------------------------------

    def journal_bytes(self) -> bytes:
        if self.path is None:
            return bytes(self._memory)
        try:
            return self.path.read_bytes()
        except FileNotFoundError:
            return b""

    def records(self) -> list[LedgerRecord]:
        return parse_journal(self.journal_bytes())

    def verify_chain(self) -> ChainStatus:
        return check_journal(self.journal_bytes())

    def registration(self, device_id: str, records=None) -> LedgerRecord | None:
        for rec in records if records is not None else self.records():
            if rec.kind == "register" and rec.device_id == device_id:
                return rec
        return None

    def remaining_budget(self, device_id: str, records=None) -> int:
        records = records if records is not None else self.records()
        reg = self.registration(device_id, records)
        if reg is None:
            raise NotRegisteredError(f"device {device_id!r} is not registered")
        spent = sum(1 for r in records if r.device_id == device_id and r.kind in SPENDING_KINDS)
        return reg.tx_limit - spent

    def trace(self, auth_hash: bytes) -> TraceResult:
        """Exact-match lookup of an authentication digest among registrations."""
        records = self.records()
        for rec in records:
            if rec.kind == "register" and rec.auth_hash == bytes(auth_hash):
                return TraceResult(rec.device_id, rec.index, self.remaining_budget(rec.device_id, records))
        return TraceResult(None, None, None)

    def find_payload(self, payload_hash: bytes, kinds=SPENDING_KINDS) -> LedgerRecord | None:
        for rec in self.records():
            if rec.kind in kinds and rec.payload_hash == bytes(payload_hash):
                return rec
        return None

    def marks_for(self, device_id: str) -> list[LedgerRecord]:
        return [r for r in self.records() if r.kind == "mark" and r.device_id == device_id]

    # -- writing ------------------------------------------------------------

    def register(self, device_id: str, auth_hash: bytes, stoch_hash: bytes, tx_limit: int) -> LedgerRecord:
        _check_device_id(device_id)
        auth_hash = _check_digest("auth_hash", auth_hash)
        stoch_hash = _check_digest("stoch_hash", stoch_hash)
        if int(tx_limit) != tx_limit or tx_limit < 0:
            raise LedgerError(f"tx_limit must be a nonnegative integer, got {tx_limit!r}")

        def build(records):
            if self.registration(device_id, records) is not None:
                raise DuplicateRegistrationError(f"device {device_id!r} is already registered")
            return "register", device_id, auth_hash, ZERO_DIGEST, stoch_hash, int(tx_limit)

        return self._append(build)

    def record_mark(self, device_id: str, payload_hash: bytes, *, auth_hash: bytes | None = None,
                    stoch_hash: bytes | None = None) -> LedgerRecord:
        return self._spend("mark", device_id, payload_hash, auth_hash, stoch_hash)

    def record_transfer(self, device_id: str, payload_hash: bytes) -> LedgerRecord:
        return self._spend("transfer", device_id, payload_hash, None, None)

    def _spend(self, kind, device_id, payload_hash, auth_hash, stoch_hash) -> LedgerRecord:
        payload_hash = _check_digest("payload_hash", payload_hash)

        def build(records):
            reg = self.registration(device_id, records)
            if reg is None:
                raise NotRegisteredError(f"device {device_id!r} is not registered")
            remaining = self.remaining_budget(device_id, records)
            if remaining <= 0:
                raise BudgetExhaustedError(f"device {device_id!r} has no transactions left (limit {reg.tx_limit})")
            h1 = reg.auth_hash if auth_hash is None else _check_digest("auth_hash", auth_hash)
            h2 = ZERO_DIGEST if stoch_hash is None else _check_digest("stoch_hash", stoch_hash)
            return kind, device_id, h1, payload_hash, h2, remaining - 1

        return self._append(build)

    def _append(self, build) -> LedgerRecord:
        with self._lock:
            if self.path is None:
                return self._append_to(self._memory, build)
            try:
                fh = open(self.path, "a+b")
            except OSError as exc:
                raise JournalWriteError(f"cannot open journal {self.path}: {exc}") from None
            with fh:
                fcntl.flock(fh, fcntl.LOCK_EX)
                try:
                    fh.seek(0)
                    data = bytearray(fh.read())
                    return self._append_to(data, build, fh)
                finally:
                    fcntl.flock(fh, fcntl.LOCK_UN)

    def _append_to(self, data: bytearray, build, fh=None) -> LedgerRecord:
        records = parse_journal(bytes(data))
        kind, device_id, h1, payload, h2, limit = build(records)
        prev = records[-1].record_hash if records else ZERO_DIGEST
        rec = LedgerRecord.seal(len(records), int(self._clock()), kind, device_id, h1, payload, h2, limit, prev)
        line = rec.line()
        if fh is None:
            data.extend(line)
            return rec
        try:
            fh.seek(0, os.SEEK_END)
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())
        except OSError as exc:
            raise JournalWriteError(f"journal write failed: {exc}") from None
        return rec
