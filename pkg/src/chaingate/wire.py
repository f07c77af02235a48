"""Framed request/response protocol spoken between two relays.

Framing: a 4-byte big-endian unsigned payload length (capped at 16 MiB),
then the payload: canonical JSON of one envelope, UTF-8, keys sorted.
A frame announcing more than the cap is a protocol violation and the
connection is closed without a response.

Envelope fields: ``v`` (always 1), ``id`` (request correlation number,
echoed verbatim in the response), ``type`` (message type), and ``body``.
Responses add ``ok``; failed responses carry ``error: {code, msg}`` instead
of a body. Request bodies:

    permitted_network_info  {}
    permitted_methods       {"networkId": str}
    invoke                  {"permittedMethodId": str, "contractName": str,
                             "methodName": str, "args": [str, ...]}

Response bodies mirror the operation results: the caller's network record,
the list of grant records, or the invocation result string.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Optional

from .encoding import canonical_json

PROTOCOL_VERSION = 1
HEADER_SIZE = 4
MAX_FRAME = 16_777_216

TYPE_NETWORK_INFO = "permitted_network_info"
TYPE_PERMITTED_METHODS = "permitted_methods"
TYPE_INVOKE = "invoke"
REQUEST_TYPES = frozenset({TYPE_NETWORK_INFO, TYPE_PERMITTED_METHODS, TYPE_INVOKE})

# closed set of codes allowed in error responses
WIRE_ERROR_CODES = frozenset(
    {
        "UNAUTHENTICATED",
        "FORBIDDEN",
        "NOT_FOUND",
        "METHOD_NOT_PERMITTED",
        "CONTRACT_ERROR",
        "MALFORMED",
        "INTERNAL",
    }
)

MAX_ID = 2**64 - 1


class FrameError(Exception):
    """Framing violation; the connection must be dropped."""


class MalformedEnvelope(Exception):
    """Decodable frame with an invalid envelope; carries the id so the
    peer can still be answered with a MALFORMED error response."""

    def __init__(self, env_id: int, msg: str):
        self.env_id = env_id
        self.msg = msg
        super().__init__(msg)


@dataclass
class WireEnvelope:
    v: int
    id: int
    type: str
    ok: Optional[bool] = None
    error: Optional[dict] = None
    body: object = None

    def to_bytes(self) -> bytes:
        record = {"v": self.v, "id": self.id, "type": self.type}
        if self.ok is not None:
            record["ok"] = self.ok
        if self.error is not None:
            record["error"] = self.error
        if self.ok is None or self.ok:
            record["body"] = self.body
        return canonical_json(record).encode("utf-8")

    @classmethod
    def from_bytes(cls, payload: bytes) -> "WireEnvelope":
        try:
            record = json.loads(payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FrameError(f"payload is not valid JSON: {exc}")
        if not isinstance(record, dict):
            raise FrameError("envelope must be a JSON object")
        env_id = record.get("id")
        if not isinstance(env_id, int) or isinstance(env_id, bool) or not 0 <= env_id <= MAX_ID:
            raise FrameError("envelope id must be an unsigned 64-bit integer")
        version = record.get("v")
        if version != PROTOCOL_VERSION:
            raise MalformedEnvelope(env_id, f"unsupported protocol version {version!r}")
        env_type = record.get("type")
        if not isinstance(env_type, str):
            raise MalformedEnvelope(env_id, "envelope type must be a string")
        ok = record.get("ok")
        if ok is not None and not isinstance(ok, bool):
            raise MalformedEnvelope(env_id, "ok must be a boolean")
        error = record.get("error")
        if error is not None and not isinstance(error, dict):
            raise MalformedEnvelope(env_id, "error must be an object")
        return cls(v=version, id=env_id, type=env_type, ok=ok, error=error, body=record.get("body"))


def request(req_id: int, req_type: str, body: object) -> WireEnvelope:
    return WireEnvelope(v=PROTOCOL_VERSION, id=req_id, type=req_type, body=body)


def response_ok(req: WireEnvelope, body: object) -> WireEnvelope:
    return WireEnvelope(v=PROTOCOL_VERSION, id=req.id, type=req.type, ok=True, body=body)


def response_error(req: WireEnvelope, code: str, msg: str) -> WireEnvelope:
    assert code in WIRE_ERROR_CODES, code
    return WireEnvelope(v=PROTOCOL_VERSION, id=req.id, type=req.type, ok=False, error={"code": code, "msg": msg})


def write_frame(sock, payload: bytes) -> None:
    if len(payload) > MAX_FRAME:
        raise FrameError(f"payload of {len(payload)} bytes exceeds the {MAX_FRAME} limit")
    sock.sendall(struct.pack(">I", len(payload)) + payload)


def _recv_exact(sock, count: int) -> Optional[bytes]:
    chunks = []
    remaining = count
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            return None
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock) -> Optional[bytes]:
    """Read one frame; None on clean end of stream, FrameError on violations."""
    header = _recv_exact(sock, HEADER_SIZE)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME:
        raise FrameError(f"announced payload of {length} bytes exceeds the {MAX_FRAME} limit")
    payload = _recv_exact(sock, length)
    if payload is None:
        raise FrameError("stream ended mid-frame")
    return payload


def write_envelope(sock, envelope: WireEnvelope) -> None:
    write_frame(sock, envelope.to_bytes())


def read_envelope(sock) -> Optional[WireEnvelope]:
    payload = read_frame(sock)
    if payload is None:
        return None
    return WireEnvelope.from_bytes(payload)
