"""Chain connector: the backend-specific half of a relay.

The mediator and message handler only ever talk to this interface, so a
different chain backend can be slotted in without touching them. The bundled
implementation binds to the in-process simulated ledger.
"""

from __future__ import annotations

from typing import List, Protocol, Sequence

from .errors import ChainError
from .ledger import Contract, Ledger, open_ledger


class ChainConnector(Protocol):
    def query(self, contract: str, method: str, args: Sequence[str]) -> str: ...

    def submit(self, contract: str, method: str, args: Sequence[str]) -> str: ...


class LedgerConnector:
    """Connector over a live in-process ledger; semantics pass straight through."""

    def __init__(self, ledger: Ledger):
        self._ledger = ledger
        self._closed = False

    @property
    def ledger(self) -> Ledger:
        return self._ledger

    def query(self, contract: str, method: str, args: Sequence[str]) -> str:
        self._check_open()
        return self._ledger.query(contract, method, args)

    def submit(self, contract: str, method: str, args: Sequence[str]) -> str:
        self._check_open()
        return self._ledger.submit(contract, method, args)

    def close(self) -> None:
        self._closed = True

    def _check_open(self) -> None:
        if self._closed:
            raise ChainError("CONNECTION_LOST", "backend connection is closed")


def connect_ledger(locator: str, contracts: List[Contract]) -> LedgerConnector:
    """Resolve a connector locator to a live backend.

    The only supported scheme is a journal file path for the simulated
    ledger, optionally prefixed with "ledger:".
    """
    path = locator[len("ledger:"):] if locator.startswith("ledger:") else locator
    return LedgerConnector(open_ledger(path, contracts))
