import json
import random

import pytest

from chaingate.errors import ChainError
from chaingate.policy import PolicyClient


@pytest.fixture
def policy(policy_ledger):
    return PolicyClient(policy_ledger)


class TestAccessibleNetworks:
    def test_first_id(self, policy):
        assert policy.accessible_register("net1", "10.0.0.1:7051") == "an-00000001"

    def test_duplicate_address(self, policy):
        policy.accessible_register("net1", "10.0.0.1:7051")
        with pytest.raises(ChainError) as err:
            policy.accessible_register("other", "10.0.0.1:7051")
        assert err.value.code == "DUPLICATE_ADDRESS"

    def test_empty_fields_rejected(self, policy):
        for name, addr in (("", "10.0.0.1:7051"), ("net1", "")):
            with pytest.raises(ChainError) as err:
                policy.accessible_register(name, addr)
            assert err.value.code == "INVALID_ARGUMENT"

    def test_sequential_ids_and_listing(self, policy):
        expected = []
        for i in range(1, 8):
            rec_id = policy.accessible_register(f"net{i}", f"10.0.0.{i}:7051")
            assert rec_id == f"an-{i:08d}"
            expected.append(rec_id)
        assert [n.id for n in policy.accessible_list()] == expected

    def test_get_by_address_on_empty(self, policy):
        with pytest.raises(ChainError) as err:
            policy.accessible_get_by_address("10.0.0.9:7051")
        assert err.value.code == "NOT_FOUND"

    def test_get_by_address_read_your_write(self, policy):
        policy.accessible_register("net1", "10.0.0.1:7051")
        rec = policy.accessible_get_by_address("10.0.0.1:7051")
        assert (rec.id, rec.name, rec.relay_address) == ("an-00000001", "net1", "10.0.0.1:7051")

    def test_get_by_address_equals_scan(self, policy):
        rng = random.Random(11)
        addresses = [f"10.1.{rng.randrange(256)}.{i}:7051" for i in range(30)]
        for i, addr in enumerate(addresses):
            policy.accessible_register(f"n{i}", addr)
        table = policy.accessible_list()
        for addr in addresses + ["10.9.9.9:1"]:
            scan = [r for r in table if r.relay_address == addr]
            if scan:
                assert policy.accessible_get_by_address(addr) == scan[0]
            else:
                with pytest.raises(ChainError):
                    policy.accessible_get_by_address(addr)

    def test_remove(self, policy):
        rec_id = policy.accessible_register("net1", "10.0.0.1:7051")
        policy.accessible_remove(rec_id)
        with pytest.raises(ChainError) as err:
            policy.accessible_get_by_address("10.0.0.1:7051")
        assert err.value.code == "NOT_FOUND"
        assert policy.accessible_list() == []

    def test_remove_unknown(self, policy):
        with pytest.raises(ChainError) as err:
            policy.accessible_remove("an-00000042")
        assert err.value.code == "NOT_FOUND"

    def test_address_reusable_after_remove(self, policy):
        first = policy.accessible_register("net1", "10.0.0.1:7051")
        policy.accessible_remove(first)
        second = policy.accessible_register("net1b", "10.0.0.1:7051")
        assert second == "an-00000002"


class TestPermittedNetworks:
    def test_first_id(self, policy):
        assert policy.permitted_register("net2", "10.0.0.2:7052") == "pn-00000001"

    def test_duplicate_address(self, policy):
        policy.permitted_register("net2", "10.0.0.2:7052")
        with pytest.raises(ChainError) as err:
            policy.permitted_register("dup", "10.0.0.2:7052")
        assert err.value.code == "DUPLICATE_ADDRESS"

    def test_lookup_round_trip(self, policy):
        with pytest.raises(ChainError):
            policy.permitted_get_by_address("10.0.0.2:7052")
        policy.permitted_register("net2", "10.0.0.2:7052")
        rec = policy.permitted_get_by_address("10.0.0.2:7052")
        assert (rec.id, rec.name, rec.address) == ("pn-00000001", "net2", "10.0.0.2:7052")

    def test_lookup_equals_scan(self, policy):
        for i in range(12):
            policy.permitted_register(f"n{i}", f"10.2.0.{i}:7052")
        table = policy.permitted_list()
        for addr in [r.address for r in table] + ["unknown:0"]:
            scan = [r for r in table if r.address == addr]
            if scan:
                assert policy.permitted_get_by_address(addr) == scan[0]
            else:
                with pytest.raises(ChainError):
                    policy.permitted_get_by_address(addr)

    def test_list_ascending_by_id(self, policy):
        for i in (3, 1, 2):
            policy.permitted_register(f"n{i}", f"addr{i}:1")
        ids = [r.id for r in policy.permitted_list()]
        assert ids == sorted(ids)

    def test_cascade_removes_grants(self, policy):
        net = policy.permitted_register("net2", "10.0.0.2:7052")
        policy.method_register(net, "svc", "MethodA")
        policy.method_register(net, "svc", "MethodB")
        policy.permitted_remove(net)
        assert policy.methods_for_network(net) == []
        assert not policy.check_permitted(net, "svc", "MethodA")

    def test_cascade_spares_other_networks(self, policy):
        n1 = policy.permitted_register("net1", "a:1")
        n2 = policy.permitted_register("net2", "b:2")
        policy.method_register(n1, "svc", "M")
        keep = policy.method_register(n2, "svc", "M")
        policy.permitted_remove(n1)
        assert [m.id for m in policy.methods_for_network(n2)] == [keep]

    def test_remove_unknown(self, policy):
        with pytest.raises(ChainError) as err:
            policy.permitted_remove("pn-00000009")
        assert err.value.code == "NOT_FOUND"


class TestPermittedMethods:
    def test_register_unknown_network(self, policy):
        with pytest.raises(ChainError) as err:
            policy.method_register("pn-00000001", "svc", "M")
        assert err.value.code == "NOT_FOUND"

    def test_duplicate_grant(self, policy):
        net = policy.permitted_register("net2", "10.0.0.2:7052")
        policy.method_register(net, "svc", "M")
        with pytest.raises(ChainError) as err:
            policy.method_register(net, "svc", "M")
        assert err.value.code == "DUPLICATE_GRANT"

    def test_sequential_grant_ids(self, policy):
        net = policy.permitted_register("net2", "10.0.0.2:7052")
        ids = [policy.method_register(net, "svc", f"M{i}") for i in range(3)]
        assert ids == ["pm-00000001", "pm-00000002", "pm-00000003"]

    def test_unknown_network_lists_empty(self, policy):
        assert policy.methods_for_network("pn-00000077") == []

    def test_grants_filtered_by_network(self, policy):
        n1 = policy.permitted_register("net1", "a:1")
        n2 = policy.permitted_register("net2", "b:2")
        a = policy.method_register(n1, "svc", "A")
        b = policy.method_register(n1, "svc", "B")
        policy.method_register(n2, "svc", "C")
        assert [m.id for m in policy.methods_for_network(n1)] == [a, b]

    def test_check_permitted(self, policy):
        assert not policy.check_permitted("pn-00000001", "svc", "M")
        net = policy.permitted_register("net2", "10.0.0.2:7052")
        policy.method_register(net, "svc", "M")
        assert policy.check_permitted(net, "svc", "M")
        assert not policy.check_permitted(net, "svc", "Other")
        assert not policy.check_permitted(net, "other", "M")

    def test_check_equals_brute_force(self, policy):
        rng = random.Random(5)
        nets = [policy.permitted_register(f"n{i}", f"h{i}:1") for i in range(4)]
        contracts = ["alpha", "beta"]
        methods = ["M1", "M2", "M3"]
        granted = set()
        for _ in range(10):
            triple = (rng.choice(nets), rng.choice(contracts), rng.choice(methods))
            if triple not in granted:
                policy.method_register(*triple)
                granted.add(triple)
        for net in nets + ["pn-00000099"]:
            for contract in contracts + ["gamma"]:
                for method in methods:
                    expected = (net, contract, method) in granted
                    assert policy.check_permitted(net, contract, method) is expected

    def test_remove_grant(self, policy):
        net = policy.permitted_register("net2", "10.0.0.2:7052")
        grant = policy.method_register(net, "svc", "M")
        policy.method_remove(grant)
        assert not policy.check_permitted(net, "svc", "M")
        with pytest.raises(ChainError) as err:
            policy.method_remove(grant)
        assert err.value.code == "NOT_FOUND"

    def test_empty_field_rejected(self, policy):
        net = policy.permitted_register("net2", "10.0.0.2:7052")
        with pytest.raises(ChainError) as err:
            policy.method_register(net, "", "M")
        assert err.value.code == "INVALID_ARGUMENT"

    def test_description_stored(self, policy):
        net = policy.permitted_register("net2", "10.0.0.2:7052")
        policy.method_register(net, "svc", "M", "returns the demo value")
        (grant,) = policy.methods_for_network(net)
        assert grant.description == "returns the demo value"


class TestDeterminism:
    def test_same_workload_same_root(self, policy_ledger):
        from chaingate.ledger import Ledger
        from chaingate.policy import policy_contracts

        def run(ledger):
            client = PolicyClient(ledger)
            rng = random.Random(99)
            nets = []
            for i in range(20):
                nets.append(client.permitted_register(f"n{i}", f"h{i}:{rng.randrange(1000, 9999)}"))
                client.accessible_register(f"a{i}", f"r{i}:{rng.randrange(1000, 9999)}")
            for _ in range(30):
                net = rng.choice(nets)
                try:
                    client.method_register(net, f"c{rng.randrange(4)}", f"M{rng.randrange(6)}")
                except ChainError:
                    pass
            return ledger.state_root()

        other = Ledger()
        for contract in policy_contracts():
            other.register_contract(contract.name, contract)
        assert run(policy_ledger) == run(other)

    def test_results_are_canonical_json(self, policy_ledger):
        raw_id = policy_ledger.submit("permitted_networks", "Register", ["net2", "10.0.0.2:7052"])
        assert raw_id == '"pn-00000001"'
        raw = policy_ledger.query("permitted_networks", "GetByAddress", ["10.0.0.2:7052"])
        record = json.loads(raw)
        assert raw == json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
