"""Error type shared across the ledger, contracts, relay, CLI and bench layers.

Every failure carries a stable string code. Codes that may travel over the
wire between relays are restricted to the closed set in ``chaingate.wire``;
the remaining codes are local to one process (ledger, PKI, config, bench).
"""

from __future__ import annotations


class ChainError(Exception):
    """Failure with a stable machine-readable code and a human message."""

    def __init__(self, code: str, message: str = ""):
        self.code = code
        self.message = message
        super().__init__(f"{code}: {message}" if message else code)


def is_code(exc: BaseException, code: str) -> bool:
    return isinstance(exc, ChainError) and exc.code == code
