"""Smart-contract gated cross-chain service invocation over simulated ledgers."""

from .errors import ChainError
from .ledger import Ledger, LedgerTransaction, open_ledger
from .policy import (
    AccessibleNetwork,
    PermittedMethod,
    PermittedNetwork,
    PolicyClient,
    policy_contracts,
)
from .connector import ChainConnector, LedgerConnector, connect_ledger
from .relay import MethodRef, Relay, RelayClient, RelayConfig, RelayServer, RemoteCredentials, authenticate

__all__ = [
    "AccessibleNetwork",
    "ChainConnector",
    "ChainError",
    "Ledger",
    "LedgerConnector",
    "LedgerTransaction",
    "MethodRef",
    "PermittedMethod",
    "PermittedNetwork",
    "PolicyClient",
    "Relay",
    "RelayClient",
    "RelayConfig",
    "RelayServer",
    "RemoteCredentials",
    "authenticate",
    "connect_ledger",
    "open_ledger",
    "policy_contracts",
]

__version__ = "0.1.0"
