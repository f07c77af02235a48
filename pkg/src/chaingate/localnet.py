"""Loopback provisioning: everything needed to run two chains on one machine.

Builds the full registration state for a pair of chains wired to talk to
each other: one CA per chain, server certificates bound to the listen
addresses, cross-issued client certificates, ledgers with the policy
contracts plus the bundled sample contracts, relay configs with the right
credential entries, and the on-chain records (permitted network, accessible
network, method grants). Used by the test suite, the benchmark harness and
the demo scripts.
"""

from __future__ import annotations

import hashlib
import socket
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .connector import LedgerConnector
from .encoding import canonical_json
from .errors import ChainError
from .ledger import Contract, Ledger, TxContext
from .pki import CertAuthority, create_ca, issue_cert
from .policy import PolicyClient, policy_contracts
from .relay import Relay, RelayConfig, RelayServer, RemoteCredentials


class KvStoreContract:
    """Small general-purpose key-value contract, handy as an invocation target."""

    name = "kv_store"
    methods = frozenset({"Put", "Get", "Delete", "Keys"})

    def invoke(self, ctx: TxContext, method: str, args: Sequence[str]) -> str:
        if method == "Put":
            if len(args) != 2 or not args[0]:
                raise ChainError("INVALID_ARGUMENT", "Put expects a nonempty key and a value")
            ctx.put(f"kv:{args[0]}", args[1])
            return canonical_json(None)
        if method == "Get":
            value = ctx.get(f"kv:{args[0]}") if len(args) == 1 else None
            if value is None:
                raise ChainError("NOT_FOUND", "no value for that key")
            return canonical_json(value)
        if method == "Delete":
            if len(args) != 1 or ctx.get(f"kv:{args[0]}") is None:
                raise ChainError("NOT_FOUND", "nothing to delete")
            ctx.delete(f"kv:{args[0]}")
            return canonical_json(None)
        return canonical_json([k[len("kv:"):] for k, _ in ctx.items("kv:")])


def _echo(method: str):
    return lambda args: canonical_json({"method": method, "args": list(args)})


_TRANSFORMS = {
    "Echo": lambda args: canonical_json(list(args)),
    "Concat": lambda args: canonical_json("".join(args)),
    "Reverse": lambda args: canonical_json([a[::-1] for a in args]),
    "Upper": lambda args: canonical_json([a.upper() for a in args]),
    "Lower": lambda args: canonical_json([a.lower() for a in args]),
    "Title": lambda args: canonical_json([a.title() for a in args]),
    "Swapcase": lambda args: canonical_json([a.swapcase() for a in args]),
    "Strip": lambda args: canonical_json([a.strip() for a in args]),
    "Lengths": lambda args: canonical_json([len(a) for a in args]),
    "TotalLength": lambda args: canonical_json(sum(len(a) for a in args)),
    "Count": lambda args: canonical_json(len(args)),
    "First": lambda args: canonical_json(args[0] if args else None),
    "Last": lambda args: canonical_json(args[-1] if args else None),
    "Sort": lambda args: canonical_json(sorted(args)),
    "Unique": lambda args: canonical_json(sorted(set(args))),
    "Join": lambda args: canonical_json(",".join(args)),
    "Repeat": lambda args: canonical_json([a * 2 for a in args]),
    "Sum": lambda args: canonical_json(sum(int(a) for a in args if a.lstrip("-").isdigit())),
    "Digest": lambda args: canonical_json(hashlib.sha256("\x1f".join(args).encode()).hexdigest()),
    "Ping": _echo("Ping"),
}


class SampleDataContract:
    """Twenty pure string-transform methods; results depend only on the call."""

    name = "sample_data"
    methods = frozenset(_TRANSFORMS)

    def invoke(self, ctx: TxContext, method: str, args: Sequence[str]) -> str:
        return _TRANSFORMS[method](args)


def sample_contracts() -> List[Contract]:
    return [KvStoreContract(), SampleDataContract()]


def standard_contracts() -> List[Contract]:
    """The contract set registered on every chain in this artifact."""
    return policy_contracts() + sample_contracts()


def reserve_port(host: str = "127.0.0.1") -> int:
    """Reserve a free loopback port by binding and releasing it."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((host, 0))
        return sock.getsockname()[1]


@dataclass
class ChainNode:
    """One chain with its ledger, relay, CA and admin-side handles."""

    name: str
    address: str
    ca: CertAuthority
    ledger: Ledger
    connector: LedgerConnector
    relay: Relay
    config: RelayConfig
    policy: PolicyClient
    server: Optional[RelayServer] = None
    network_ids: Dict[str, str] = field(default_factory=dict)

    def start(self) -> RelayServer:
        self.server = self.relay.serve()
        return self.server

    def stop(self) -> None:
        if self.server is not None:
            self.server.stop()
            self.server = None


def _build_node(name: str, address: str, base_dir: Path, contracts: List[Contract]) -> ChainNode:
    node_dir = base_dir / name
    ca = create_ca(f"{name}-ca", node_dir / "ca")
    server_cert = issue_cert(ca, address, "server", node_dir / "tls")
    ledger = Ledger()
    for contract in contracts:
        ledger.register_contract(contract.name, contract)
    connector = LedgerConnector(ledger)
    config = RelayConfig(
        listen_address=address,
        host_chain_ref=str(node_dir / "ledger.ndjson"),
        server_cert_path=str(server_cert.cert_path),
        server_key_path=str(server_cert.key_path),
        ca_cert_path=str(ca.cert_path),
    )
    relay = Relay(config, connector)
    return ChainNode(
        name=name,
        address=address,
        ca=ca,
        ledger=ledger,
        connector=connector,
        relay=relay,
        config=config,
        policy=PolicyClient(connector),
    )


def link(host: ChainNode, guest: ChainNode, base_dir: Path, grants: Sequence[tuple] = ()) -> str:
    """Make ``guest`` a permitted network of ``host`` and ``host`` accessible to ``guest``.

    Issues the client certificate from the host CA (CN = guest relay
    address), wires the guest's credentials for dialing the host, registers
    the on-chain records on both sides and applies the method grants given
    as (contract, method) pairs. Returns the permitted-network id assigned
    by the host chain.
    """
    client_cert = issue_cert(host.ca, guest.address, "client", Path(base_dir) / guest.name / "remotes")
    guest.config.remote_credentials[host.address] = RemoteCredentials(
        client_cert_path=str(client_cert.cert_path),
        client_key_path=str(client_cert.key_path),
        remote_ca_path=str(host.ca.cert_path),
    )
    network_id = host.policy.permitted_register(guest.name, guest.address)
    guest.network_ids[host.address] = network_id
    guest.policy.accessible_register(host.name, host.address)
    for contract, method in grants:
        host.policy.method_register(network_id, contract, method)
    return network_id


DEFAULT_GRANTS = (
    ("accessible_networks", "GetByAddress"),
    ("permitted_networks", "GetByAddress"),
    ("permitted_methods", "GetPermittedMethodsByNetworkId"),
)


def build_pair(
    base_dir,
    names: Sequence[str] = ("chain1", "chain2"),
    grants: Sequence[tuple] = DEFAULT_GRANTS,
    symmetric: bool = False,
    start: bool = True,
) -> List[ChainNode]:
    """Provision two linked loopback chains; ``names[0]`` hosts the grants."""
    base_dir = Path(base_dir)
    nodes = []
    contracts_per_node = [standard_contracts() for _ in names]
    for name, contracts in zip(names, contracts_per_node):
        address = f"127.0.0.1:{reserve_port()}"
        nodes.append(_build_node(name, address, base_dir, contracts))
    host, guest = nodes
    link(host, guest, base_dir, grants)
    if symmetric:
        link(guest, host, base_dir, grants)
    if start:
        for node in nodes:
            node.start()
    return nodes
