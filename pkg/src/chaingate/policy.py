"""The three policy contracts: accessible networks, permitted networks, permitted methods.

Accessible networks are the remote chains this host may call. Permitted
networks are the remote chains granted access to this host; their stored
address doubles as the client-certificate common name checked on every relay
request. Permitted methods bind one permitted network to one (contract,
method) pair and are the authorization layer enforced at invocation time.

Records are stored as canonical JSON under ``rec:<id>`` with a uniqueness
index per lookup key. IDs are contract-local counters rendered as a prefixed
zero-padded 8-digit decimal ("an-", "pn-", "pm-"), which keeps ledgers
replayable. Every method result is canonical JSON text: a JSON string for
register (the new id), an object or array for lookups, ``true``/``false``
for permission checks, ``null`` for removals.

Removing a permitted network cascades over its method grants via a
cross-contract call, so referential integrity holds after every commit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Sequence

from .encoding import canonical_json
from .errors import ChainError
from .ledger import TxContext

ACCESSIBLE_CONTRACT = "accessible_networks"
PERMITTED_CONTRACT = "permitted_networks"
METHODS_CONTRACT = "permitted_methods"

_SEQ_KEY = "seq"


@dataclass(frozen=True)
class AccessibleNetwork:
    id: str
    name: str
    relay_address: str

    def to_record(self) -> dict:
        return {"id": self.id, "name": self.name, "relayAddress": self.relay_address}

    @classmethod
    def from_record(cls, rec: dict) -> "AccessibleNetwork":
        return cls(rec["id"], rec["name"], rec["relayAddress"])


@dataclass(frozen=True)
class PermittedNetwork:
    id: str
    name: str
    address: str

    def to_record(self) -> dict:
        return {"id": self.id, "name": self.name, "address": self.address}

    @classmethod
    def from_record(cls, rec: dict) -> "PermittedNetwork":
        return cls(rec["id"], rec["name"], rec["address"])


@dataclass(frozen=True)
class PermittedMethod:
    id: str
    network_id: str
    contract_name: str
    method_name: str
    description: str = ""

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "networkId": self.network_id,
            "contractName": self.contract_name,
            "methodName": self.method_name,
            "description": self.description,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "PermittedMethod":
        return cls(rec["id"], rec["networkId"], rec["contractName"], rec["methodName"], rec["description"])


def _next_id(ctx: TxContext, prefix: str) -> str:
    current = int(ctx.get(_SEQ_KEY) or "0") + 1
    ctx.put(_SEQ_KEY, str(current))
    return f"{prefix}-{current:08d}"


def _require_args(args: Sequence[str], count: int, method: str) -> None:
    if len(args) != count:
        raise ChainError("INVALID_ARGUMENT", f"{method} expects {count} args, got {len(args)}")


def _list_records(ctx: TxContext) -> List[dict]:
    # rec: keys are zero-padded, so key order is id order
    return [json.loads(value) for _, value in ctx.items("rec:")]


class _NetworkRegistry:
    """Shared Register/GetByAddress/List/Remove behaviour for the two network contracts."""

    id_prefix = ""
    address_field = ""

    def _register(self, ctx: TxContext, name: str, address: str) -> str:
        if not name or not address:
            raise ChainError("INVALID_ARGUMENT", "name and address must be nonempty")
        if ctx.get(f"addr:{address}") is not None:
            raise ChainError("DUPLICATE_ADDRESS", f"address {address!r} already registered")
        new_id = _next_id(ctx, self.id_prefix)
        record = {"id": new_id, "name": name, self.address_field: address}
        ctx.put(f"rec:{new_id}", canonical_json(record))
        ctx.put(f"addr:{address}", new_id)
        return canonical_json(new_id)

    def _get_by_address(self, ctx: TxContext, address: str) -> str:
        rec_id = ctx.get(f"addr:{address}")
        if rec_id is None:
            raise ChainError("NOT_FOUND", f"no network with address {address!r}")
        return ctx.get(f"rec:{rec_id}")

    def _remove(self, ctx: TxContext, rec_id: str) -> dict:
        raw = ctx.get(f"rec:{rec_id}")
        if raw is None:
            raise ChainError("NOT_FOUND", f"no network with id {rec_id!r}")
        record = json.loads(raw)
        ctx.delete(f"rec:{rec_id}")
        ctx.delete(f"addr:{record[self.address_field]}")
        return record


class AccessibleNetworksContract(_NetworkRegistry):
    name = ACCESSIBLE_CONTRACT
    methods = frozenset({"Register", "GetByAddress", "List", "Remove"})
    id_prefix = "an"
    address_field = "relayAddress"

    def invoke(self, ctx: TxContext, method: str, args: Sequence[str]) -> str:
        if method == "Register":
            _require_args(args, 2, method)
            return self._register(ctx, args[0], args[1])
        if method == "GetByAddress":
            _require_args(args, 1, method)
            return self._get_by_address(ctx, args[0])
        if method == "List":
            _require_args(args, 0, method)
            return canonical_json(_list_records(ctx))
        _require_args(args, 1, "Remove")
        self._remove(ctx, args[0])
        return canonical_json(None)


class PermittedNetworksContract(_NetworkRegistry):
    name = PERMITTED_CONTRACT
    methods = frozenset({"Register", "GetByAddress", "List", "Remove"})
    id_prefix = "pn"
    address_field = "address"

    def invoke(self, ctx: TxContext, method: str, args: Sequence[str]) -> str:
        if method == "Register":
            _require_args(args, 2, method)
            return self._register(ctx, args[0], args[1])
        if method == "GetByAddress":
            _require_args(args, 1, method)
            return self._get_by_address(ctx, args[0])
        if method == "List":
            _require_args(args, 0, method)
            return canonical_json(_list_records(ctx))
        _require_args(args, 1, "Remove")
        record = self._remove(ctx, args[0])
        ctx.call(METHODS_CONTRACT, "RemoveByNetworkId", [record["id"]])
        return canonical_json(None)


class PermittedMethodsContract:
    name = METHODS_CONTRACT
    methods = frozenset(
        {"Register", "GetPermittedMethodsByNetworkId", "CheckPermitted", "Remove", "RemoveByNetworkId"}
    )

    @staticmethod
    def _grant_key(network_id: str, contract: str, method: str) -> str:
        return "grant:" + canonical_json([network_id, contract, method])

    def invoke(self, ctx: TxContext, method: str, args: Sequence[str]) -> str:
        if method == "Register":
            _require_args(args, 4, method)
            return self._register(ctx, *args)
        if method == "GetPermittedMethodsByNetworkId":
            _require_args(args, 1, method)
            grants = [r for r in _list_records(ctx) if r["networkId"] == args[0]]
            return canonical_json(grants)
        if method == "CheckPermitted":
            _require_args(args, 3, method)
            granted = ctx.get(self._grant_key(args[0], args[1], args[2])) is not None
            return canonical_json(granted)
        if method == "Remove":
            _require_args(args, 1, method)
            return self._remove(ctx, args[0])
        _require_args(args, 1, "RemoveByNetworkId")
        removed = 0
        for record in _list_records(ctx):
            if record["networkId"] == args[0]:
                self._delete_record(ctx, record)
                removed += 1
        return canonical_json(removed)

    def _register(self, ctx: TxContext, network_id: str, contract: str, method: str, description: str) -> str:
        if not network_id or not contract or not method:
            raise ChainError("INVALID_ARGUMENT", "networkId, contractName and methodName must be nonempty")
        networks = json.loads(ctx.call(PERMITTED_CONTRACT, "List", []))
        if not any(n["id"] == network_id for n in networks):
            raise ChainError("NOT_FOUND", f"no permitted network with id {network_id!r}")
        grant_key = self._grant_key(network_id, contract, method)
        if ctx.get(grant_key) is not None:
            raise ChainError("DUPLICATE_GRANT", f"{contract}.{method} already granted to {network_id}")
        new_id = _next_id(ctx, "pm")
        record = {
            "id": new_id,
            "networkId": network_id,
            "contractName": contract,
            "methodName": method,
            "description": description,
        }
        ctx.put(f"rec:{new_id}", canonical_json(record))
        ctx.put(grant_key, new_id)
        return canonical_json(new_id)

    def _remove(self, ctx: TxContext, rec_id: str) -> str:
        raw = ctx.get(f"rec:{rec_id}")
        if raw is None:
            raise ChainError("NOT_FOUND", f"no permitted method with id {rec_id!r}")
        self._delete_record(ctx, json.loads(raw))
        return canonical_json(None)

    def _delete_record(self, ctx: TxContext, record: dict) -> None:
        ctx.delete(f"rec:{record['id']}")
        ctx.delete(self._grant_key(record["networkId"], record["contractName"], record["methodName"]))


def policy_contracts() -> list:
    return [AccessibleNetworksContract(), PermittedNetworksContract(), PermittedMethodsContract()]


class PolicyClient:
    """Typed access to the policy contracts over anything with query/submit."""

    def __init__(self, backend):
        self._backend = backend

    # accessible networks

    def accessible_register(self, name: str, relay_address: str) -> str:
        return json.loads(self._backend.submit(ACCESSIBLE_CONTRACT, "Register", [name, relay_address]))

    def accessible_get_by_address(self, relay_address: str) -> AccessibleNetwork:
        raw = self._backend.query(ACCESSIBLE_CONTRACT, "GetByAddress", [relay_address])
        return AccessibleNetwork.from_record(json.loads(raw))

    def accessible_list(self) -> List[AccessibleNetwork]:
        raw = self._backend.query(ACCESSIBLE_CONTRACT, "List", [])
        return [AccessibleNetwork.from_record(r) for r in json.loads(raw)]

    def accessible_remove(self, rec_id: str) -> None:
        self._backend.submit(ACCESSIBLE_CONTRACT, "Remove", [rec_id])

    # permitted networks

    def permitted_register(self, name: str, address: str) -> str:
        return json.loads(self._backend.submit(PERMITTED_CONTRACT, "Register", [name, address]))

    def permitted_get_by_address(self, address: str) -> PermittedNetwork:
        raw = self._backend.query(PERMITTED_CONTRACT, "GetByAddress", [address])
        return PermittedNetwork.from_record(json.loads(raw))

    def permitted_list(self) -> List[PermittedNetwork]:
        raw = self._backend.query(PERMITTED_CONTRACT, "List", [])
        return [PermittedNetwork.from_record(r) for r in json.loads(raw)]

    def permitted_remove(self, rec_id: str) -> None:
        self._backend.submit(PERMITTED_CONTRACT, "Remove", [rec_id])

    # permitted methods

    def method_register(self, network_id: str, contract: str, method: str, description: str = "") -> str:
        args = [network_id, contract, method, description]
        return json.loads(self._backend.submit(METHODS_CONTRACT, "Register", args))

    def methods_for_network(self, network_id: str) -> List[PermittedMethod]:
        raw = self._backend.query(METHODS_CONTRACT, "GetPermittedMethodsByNetworkId", [network_id])
        return [PermittedMethod.from_record(r) for r in json.loads(raw)]

    def check_permitted(self, network_id: str, contract: str, method: str) -> bool:
        raw = self._backend.query(METHODS_CONTRACT, "CheckPermitted", [network_id, contract, method])
        return json.loads(raw)

    def method_remove(self, rec_id: str) -> None:
        self._backend.submit(METHODS_CONTRACT, "Remove", [rec_id])
