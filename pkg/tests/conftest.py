import pytest

from chaingate.errors import ChainError
from chaingate.ledger import Ledger
from chaingate.policy import policy_contracts


class KvDemoContract:
    """Minimal handler used to exercise the raw ledger surface."""

    name = "kv_demo"
    methods = frozenset({"put", "get"})

    def invoke(self, ctx, method, args):
        if method == "put":
            if len(args) != 2:
                raise ChainError("CONTRACT_ERROR", "put expects key and value")
            ctx.put(args[0], args[1])
            return ""
        value = ctx.get(args[0]) if len(args) == 1 else None
        if value is None:
            raise ChainError("NOT_FOUND", "no such key")
        return value


@pytest.fixture
def kv_ledger():
    ledger = Ledger()
    ledger.register_contract("kv_demo", KvDemoContract())
    return ledger


@pytest.fixture
def policy_ledger():
    ledger = Ledger()
    for contract in policy_contracts():
        ledger.register_contract(contract.name, contract)
    return ledger
