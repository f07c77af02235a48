"""Canonical byte encodings used for hashing and on the wire.

Two encodings are defined here and must never change once ledgers exist:

* Canonical JSON: object keys sorted ascending, no insignificant whitespace,
  UTF-8 without ASCII escaping. This is the text form of every structured
  value (contract results, wire envelope payloads, persisted transactions).

* Length-prefixed concatenation: each field rendered to bytes and prefixed
  with its 4-byte big-endian byte length, fields concatenated in declared
  order. Integers are rendered as 8-byte big-endian unsigned values; string
  lists as the concatenation of their length-prefixed UTF-8 items. This is
  the pre-image format for all SHA-256 digests over ledger data.
"""

from __future__ import annotations

import hashlib
import json
import struct
from typing import Iterable, Mapping

DIGEST_SIZE = 32
ZERO_DIGEST = b"\x00" * DIGEST_SIZE


def canonical_json(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def length_prefixed(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


def encode_uint(value: int) -> bytes:
    return struct.pack(">Q", value)


def encode_str_list(items: Iterable[str]) -> bytes:
    return b"".join(length_prefixed(item.encode("utf-8")) for item in items)


def transaction_preimage(
    seq: int,
    contract: str,
    method: str,
    args: Iterable[str],
    result_digest: bytes,
    prev_hash: bytes,
) -> bytes:
    """Hash pre-image of one transaction, fields in declared order."""
    fields = (
        encode_uint(seq),
        contract.encode("utf-8"),
        method.encode("utf-8"),
        encode_str_list(args),
        result_digest,
        prev_hash,
    )
    return b"".join(length_prefixed(f) for f in fields)


def state_digest(entries: Mapping[str, str]) -> bytes:
    """SHA-256 over all entries serialized in ascending key order.

    The empty map serializes to zero bytes, so its digest is SHA-256 of the
    empty string.
    """
    h = hashlib.sha256()
    for key in sorted(entries):
        h.update(length_prefixed(key.encode("utf-8")))
        h.update(length_prefixed(entries[key].encode("utf-8")))
    return h.digest()


def result_digest(result: str) -> bytes:
    return sha256(result.encode("utf-8"))
