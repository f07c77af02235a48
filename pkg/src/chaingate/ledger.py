"""Deterministic single-chain ledger: hash-chained log driving a key-value state.

The ledger is the host-blockchain stand-in. Registered contract handlers are
pure functions of (world state, args); mutating invocations go through
``submit`` which appends one hash-chained transaction per commit, read-only
invocations go through ``query`` and leave no trace. The world state is fully
determined by the ordered log: replaying a log onto a fresh ledger with the
same handlers reproduces the state root byte for byte.

Chain invariants, checked on replay:
  * txHash = SHA-256 over the length-prefixed encoding of
    (seq, contract, method, args, resultDigest, prevHash)
  * prevHash of seq n equals txHash of seq n-1; seq 0 links to 32 zero bytes
  * seq values are contiguous from 0
  * resultDigest matches the re-executed handler result

Handlers are namespaced: a handler reads and writes only keys under its own
contract name (world-state key = contract ":" key). Cross-contract effects go
through ``TxContext.call``, which dispatches to the other handler inside the
same commit.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Protocol, Sequence, Tuple

from .encoding import (
    ZERO_DIGEST,
    canonical_json,
    result_digest,
    sha256,
    state_digest,
    transaction_preimage,
)
from .errors import ChainError

MAX_LOG_LINE = 1 << 24


@dataclass(frozen=True)
class LedgerTransaction:
    seq: int
    contract: str
    method: str
    args: Tuple[str, ...]
    result_digest: bytes
    prev_hash: bytes
    tx_hash: bytes

    def to_record(self) -> dict:
        return {
            "seq": self.seq,
            "contract": self.contract,
            "method": self.method,
            "args": list(self.args),
            "resultDigest": self.result_digest.hex(),
            "prevHash": self.prev_hash.hex(),
            "txHash": self.tx_hash.hex(),
        }

    def to_line(self) -> str:
        return canonical_json(self.to_record())

    @classmethod
    def from_record(cls, record: dict) -> "LedgerTransaction":
        try:
            return cls(
                seq=int(record["seq"]),
                contract=record["contract"],
                method=record["method"],
                args=tuple(record["args"]),
                result_digest=bytes.fromhex(record["resultDigest"]),
                prev_hash=bytes.fromhex(record["prevHash"]),
                tx_hash=bytes.fromhex(record["txHash"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ChainError("CHAIN_BROKEN", f"unparseable transaction record: {exc}")


class Contract(Protocol):
    """Contract handler contract: a named method table over a state view."""

    name: str
    methods: frozenset

    def invoke(self, ctx: "TxContext", method: str, args: Sequence[str]) -> str: ...


class TxContext:
    """State view handed to a handler, scoped to its own namespace.

    Writes are buffered and applied only if the whole invocation succeeds,
    so a failed submit leaves no trace. ``call`` dispatches to another
    registered contract inside the same buffer, which keeps multi-contract
    commits atomic.
    """

    def __init__(self, ledger: "Ledger", contract: str, read_only: bool, pending: Optional[dict] = None):
        self._ledger = ledger
        self._contract = contract
        self.read_only = read_only
        # key -> value, or None as a delete tombstone; shared across call()
        self._pending: Dict[str, Optional[str]] = pending if pending is not None else {}

    def _full_key(self, key: str) -> str:
        return f"{self._contract}:{key}"

    def get(self, key: str) -> Optional[str]:
        full = self._full_key(key)
        if full in self._pending:
            return self._pending[full]
        return self._ledger._state.get(full)

    def put(self, key: str, value: str) -> None:
        if self.read_only:
            raise ChainError("CONTRACT_ERROR", "write attempted in read-only invocation")
        self._pending[self._full_key(key)] = value

    def delete(self, key: str) -> None:
        if self.read_only:
            raise ChainError("CONTRACT_ERROR", "delete attempted in read-only invocation")
        self._pending[self._full_key(key)] = None

    def items(self, prefix: str = "") -> List[Tuple[str, str]]:
        """All live (key, value) pairs under this namespace, sorted by key."""
        ns = f"{self._contract}:"
        merged: Dict[str, Optional[str]] = {}
        for full, value in self._ledger._state.items():
            if full.startswith(ns):
                merged[full[len(ns):]] = value
        for full, value in self._pending.items():
            if full.startswith(ns):
                merged[full[len(ns):]] = value
        return sorted(
            (k, v) for k, v in merged.items() if v is not None and k.startswith(prefix)
        )

    def call(self, contract: str, method: str, args: Sequence[str]) -> str:
        """Invoke another contract within the same commit."""
        handler = self._ledger._contract_or_raise(contract)
        child = TxContext(self._ledger, contract, self.read_only, self._pending)
        return self._ledger._dispatch(handler, child, method, args)


class Ledger:
    """Append-only hash-chained transaction log over a key-value world state.

    Shared across threads: submits are serialized into one total commit
    order; queries take the same lock briefly so every read sees a committed
    snapshot.
    """

    def __init__(self):
        self._contracts: Dict[str, Contract] = {}
        self._state: Dict[str, str] = {}
        self._log: List[LedgerTransaction] = []
        self._lock = threading.Lock()
        self._journal = None

    # -- registration ------------------------------------------------------

    def register_contract(self, name: str, handler: Contract) -> None:
        if not name:
            raise ChainError("INVALID_ARGUMENT", "contract name must be nonempty")
        if name in self._contracts:
            raise ChainError("DUPLICATE_CONTRACT", f"contract {name!r} already registered")
        self._contracts[name] = handler

    def contracts(self) -> List[str]:
        return sorted(self._contracts)

    def _contract_or_raise(self, name: str) -> Contract:
        handler = self._contracts.get(name)
        if handler is None:
            raise ChainError("UNKNOWN_CONTRACT", f"no contract named {name!r}")
        return handler

    @staticmethod
    def _dispatch(handler: Contract, ctx: TxContext, method: str, args: Sequence[str]) -> str:
        if method not in handler.methods:
            raise ChainError("UNKNOWN_METHOD", f"{handler.name} has no method {method!r}")
        return handler.invoke(ctx, method, args)

    # -- invocation --------------------------------------------------------

    def submit(self, contract: str, method: str, args: Sequence[str]) -> str:
        """Execute a mutating invocation and append one committed transaction."""
        args = tuple(args)
        with self._lock:
            handler = self._contract_or_raise(contract)
            ctx = TxContext(self, contract, read_only=False)
            result = self._dispatch(handler, ctx, method, args)
            tx = self._make_tx(contract, method, args, result)
            self._apply(ctx._pending)
            self._log.append(tx)
            if self._journal is not None:
                self._journal.write(tx.to_line() + "\n")
                self._journal.flush()
            return result

    def query(self, contract: str, method: str, args: Sequence[str]) -> str:
        """Execute a read-only invocation; no log entry, no state change."""
        with self._lock:
            handler = self._contract_or_raise(contract)
            ctx = TxContext(self, contract, read_only=True)
            return self._dispatch(handler, ctx, method, tuple(args))

    def _make_tx(self, contract: str, method: str, args: Tuple[str, ...], result: str) -> LedgerTransaction:
        seq = len(self._log)
        prev_hash = self._log[-1].tx_hash if self._log else ZERO_DIGEST
        rdigest = result_digest(result)
        tx_hash = sha256(transaction_preimage(seq, contract, method, args, rdigest, prev_hash))
        return LedgerTransaction(seq, contract, method, args, rdigest, prev_hash, tx_hash)

    def _apply(self, pending: Dict[str, Optional[str]]) -> None:
        for key, value in pending.items():
            if value is None:
                self._state.pop(key, None)
            else:
                self._state[key] = value

    # -- state -------------------------------------------------------------

    def state_root(self) -> bytes:
        with self._lock:
            return state_digest(self._state)

    def world_state(self) -> Dict[str, str]:
        with self._lock:
            return dict(self._state)

    def log(self) -> List[LedgerTransaction]:
        with self._lock:
            return list(self._log)

    def height(self) -> int:
        with self._lock:
            return len(self._log)

    # -- replay and persistence --------------------------------------------

    def apply_log(self, transactions: Iterable[LedgerTransaction]) -> None:
        """Replay a persisted log onto this (empty) ledger, verifying the chain."""
        with self._lock:
            if self._log:
                raise ChainError("INVALID_ARGUMENT", "replay target must be an empty ledger")
            for tx in transactions:
                self._replay_one(tx)

    def _replay_one(self, tx: LedgerTransaction) -> None:
        seq = len(self._log)
        if tx.seq != seq:
            raise ChainError("CHAIN_BROKEN", f"expected seq {seq}, found {tx.seq}")
        prev_hash = self._log[-1].tx_hash if self._log else ZERO_DIGEST
        if tx.prev_hash != prev_hash:
            raise ChainError("CHAIN_BROKEN", f"prevHash mismatch at seq {seq}")
        expected = sha256(
            transaction_preimage(tx.seq, tx.contract, tx.method, tx.args, tx.result_digest, tx.prev_hash)
        )
        if tx.tx_hash != expected:
            raise ChainError("CHAIN_BROKEN", f"txHash mismatch at seq {seq}")
        try:
            handler = self._contract_or_raise(tx.contract)
            ctx = TxContext(self, tx.contract, read_only=False)
            result = self._dispatch(handler, ctx, tx.method, tx.args)
        except ChainError as exc:
            raise ChainError("CHAIN_BROKEN", f"replay of seq {seq} failed: {exc}")
        if result_digest(result) != tx.result_digest:
            raise ChainError("CHAIN_BROKEN", f"resultDigest mismatch at seq {seq}")
        self._apply(ctx._pending)
        self._log.append(tx)

    def save(self, path) -> None:
        """Write the full log, one canonical JSON record per line."""
        with self._lock:
            lines = [tx.to_line() for tx in self._log]
        Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")

    def load(self, path) -> None:
        """Replay a persisted log file into this empty ledger."""
        self.apply_log(parse_log_file(path))

    def attach_journal(self, path) -> None:
        """Append every future commit to ``path`` (created if missing)."""
        with self._lock:
            if self._journal is not None:
                raise ChainError("INVALID_ARGUMENT", "journal already attached")
            self._journal = open(path, "a", encoding="utf-8")

    def close(self) -> None:
        with self._lock:
            if self._journal is not None:
                self._journal.close()
                self._journal = None


def parse_log_file(path) -> List[LedgerTransaction]:
    text = Path(path).read_text(encoding="utf-8")
    transactions = []
    for lineno, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ChainError("CHAIN_BROKEN", f"line {lineno + 1}: invalid record: {exc}")
        transactions.append(LedgerTransaction.from_record(record))
    return transactions


def open_ledger(path, contracts: Sequence[Contract]) -> Ledger:
    """Open (or create) a journal-backed ledger with the given handlers."""
    ledger = Ledger()
    for handler in contracts:
        ledger.register_contract(handler.name, handler)
    path = Path(path)
    if path.exists():
        ledger.load(path)
    ledger.attach_journal(path)
    return ledger
