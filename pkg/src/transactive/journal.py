"""Append-only JSON Lines journals with a per-line hash chain.

Every line is a compact JSON object whose last field, ``chain``, is
``sha256(previous_chain + body)`` where ``body`` is the line's text before the
``,"chain":`` suffix. Flipping any byte of a line therefore breaks either the
JSON, the chain of that line, or the chain of every later line.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import IO, Iterator

GENESIS = "0" * 64
_CHAIN_SEP = ',"chain":"'


class CorruptLog(Exception):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


def _link(prev: str, body: str) -> str:
    return hashlib.sha256((prev + body).encode()).hexdigest()


class JournalWriter:
    """Writes records (dicts without ``seq``/``chain``); assigns ``seq`` itself."""

    def __init__(self, stream: IO[str]):
        self._stream = stream
        self._prev = GENESIS
        self.seq = 0

    @classmethod
    def open(cls, path: Path) -> "JournalWriter":
        return cls(open(path, "w", encoding="utf-8"))

    def write(self, record: dict) -> dict:
        # field order is fixed: seq first, then the record's own order, chain last
        full = {"seq": self.seq, **record}
        body = json.dumps(full, separators=(",", ":"))
        assert body.endswith("}")
        chain = _link(self._prev, body[:-1])
        self._stream.write(f'{body[:-1]}{_CHAIN_SEP}{chain}"}}\n')
        self._prev = chain
        self.seq += 1
        return full

    def close(self) -> None:
        self._stream.close()


def read_journal(path: Path) -> Iterator[dict]:
    """Yield verified records in order; raise :class:`CorruptLog` on any defect."""
    prev = GENESIS
    expected_seq = 0
    with open(path, "rb") as fh:
        for line_no, raw in enumerate(fh, start=1):
            try:
                text = raw.decode("utf-8")
            except UnicodeDecodeError:
                raise CorruptLog(line_no, "not valid UTF-8") from None
            if not text.endswith("\n"):
                raise CorruptLog(line_no, "truncated line")
            text = text[:-1]
            cut = text.rfind(_CHAIN_SEP)
            if cut < 0 or not text.endswith('"}'):
                raise CorruptLog(line_no, "missing chain field")
            body = text[:cut]
            claimed = text[cut + len(_CHAIN_SEP):-2]
            try:
                record = json.loads(text)
            except json.JSONDecodeError as exc:
                raise CorruptLog(line_no, f"bad JSON: {exc.msg}") from None
            if not isinstance(record, dict):
                raise CorruptLog(line_no, "record is not an object")
            seq = record.get("seq")
            if seq != expected_seq:
                raise CorruptLog(line_no, f"seq gap: expected {expected_seq}, found {seq}")
            if record.get("chain") != claimed or _link(prev, body) != claimed:
                raise CorruptLog(line_no, "hash chain mismatch")
            prev = claimed
            expected_seq += 1
            del record["chain"]
            yield record
