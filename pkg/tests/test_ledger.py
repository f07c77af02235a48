import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaingate.encoding import ZERO_DIGEST, sha256, state_digest
from chaingate.errors import ChainError
from chaingate.ledger import Ledger, LedgerTransaction, parse_log_file
from tests.conftest import KvDemoContract

# SHA-256 of the empty string: the root of an empty world state, whose
# canonical serialization is zero bytes.
EMPTY_ROOT_HEX = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def fill_random(ledger, n, seed=7):
    rng = random.Random(seed)
    for _ in range(n):
        key = f"k{rng.randrange(50)}"
        ledger.submit("kv_demo", "put", [key, f"v{rng.randrange(10**6)}"])


class TestRegistration:
    def test_first_registration_succeeds(self):
        Ledger().register_contract("permitted_networks", KvDemoContract())

    def test_duplicate_name_rejected(self):
        ledger = Ledger()
        ledger.register_contract("permitted_networks", KvDemoContract())
        with pytest.raises(ChainError) as err:
            ledger.register_contract("permitted_networks", KvDemoContract())
        assert err.value.code == "DUPLICATE_CONTRACT"

    def test_registry_enumerates_all_names(self, policy_ledger):
        assert set(policy_ledger.contracts()) == {
            "accessible_networks",
            "permitted_networks",
            "permitted_methods",
        }


class TestSubmitQuery:
    def test_unknown_contract(self, kv_ledger):
        with pytest.raises(ChainError) as err:
            kv_ledger.submit("nope", "put", ["a", "b"])
        assert err.value.code == "UNKNOWN_CONTRACT"

    def test_unknown_method(self, kv_ledger):
        with pytest.raises(ChainError) as err:
            kv_ledger.submit("kv_demo", "frobnicate", [])
        assert err.value.code == "UNKNOWN_METHOD"

    def test_read_your_write(self, kv_ledger):
        kv_ledger.submit("kv_demo", "put", ["k", "v"])
        assert kv_ledger.query("kv_demo", "get", ["k"]) == "v"

    def test_query_miss(self, kv_ledger):
        with pytest.raises(ChainError) as err:
            kv_ledger.query("kv_demo", "get", ["absent"])
        assert err.value.code == "NOT_FOUND"

    def test_query_never_changes_state(self, kv_ledger):
        kv_ledger.submit("kv_demo", "put", ["k", "v"])
        before = kv_ledger.state_root()
        kv_ledger.query("kv_demo", "get", ["k"])
        with pytest.raises(ChainError):
            kv_ledger.query("kv_demo", "get", ["absent"])
        assert kv_ledger.state_root() == before

    def test_query_result_equals_latest_write(self, kv_ledger):
        fill_random(kv_ledger, 200)
        # oracle: scan the log for the last put touching each key
        last = {}
        for tx in kv_ledger.log():
            if tx.method == "put":
                last[tx.args[0]] = tx.args[1]
        for key, value in last.items():
            assert kv_ledger.query("kv_demo", "get", [key]) == value

    def test_failed_submit_leaves_no_trace(self, kv_ledger):
        kv_ledger.submit("kv_demo", "put", ["k", "v"])
        root = kv_ledger.state_root()
        height = kv_ledger.height()
        with pytest.raises(ChainError) as err:
            kv_ledger.submit("kv_demo", "put", ["only-one-arg"])
        assert err.value.code == "CONTRACT_ERROR"
        assert kv_ledger.state_root() == root
        assert kv_ledger.height() == height


class TestStateRoot:
    def test_empty_ledger_root(self):
        assert Ledger().state_root().hex() == EMPTY_ROOT_HEX
        assert state_digest({}) == sha256(b"")

    def test_same_sequence_same_root(self):
        a, b = Ledger(), Ledger()
        for ledger in (a, b):
            ledger.register_contract("kv_demo", KvDemoContract())
            fill_random(ledger, 100, seed=13)
        assert a.state_root() == b.state_root()
        assert [t.tx_hash for t in a.log()] == [t.tx_hash for t in b.log()]

    def test_single_value_difference_changes_root(self):
        a, b = Ledger(), Ledger()
        for ledger, value in ((a, "x"), (b, "y")):
            ledger.register_contract("kv_demo", KvDemoContract())
            ledger.submit("kv_demo", "put", ["shared", "same"])
            ledger.submit("kv_demo", "put", ["diff", value])
        assert a.state_root() != b.state_root()


class TestHashChain:
    def test_genesis_links_to_zero(self, kv_ledger):
        kv_ledger.submit("kv_demo", "put", ["k", "v"])
        assert kv_ledger.log()[0].prev_hash == ZERO_DIGEST

    def test_chain_is_linked_and_contiguous(self, kv_ledger):
        fill_random(kv_ledger, 30)
        log = kv_ledger.log()
        for i, tx in enumerate(log):
            assert tx.seq == i
            if i:
                assert tx.prev_hash == log[i - 1].tx_hash


class TestReplay:
    def test_replay_empty_log(self, kv_ledger):
        kv_ledger.apply_log([])
        assert kv_ledger.state_root().hex() == EMPTY_ROOT_HEX

    def test_replay_reproduces_live_root(self, kv_ledger, tmp_path):
        fill_random(kv_ledger, 150)
        path = tmp_path / "ledger.ndjson"
        kv_ledger.save(path)

        fresh = Ledger()
        fresh.register_contract("kv_demo", KvDemoContract())
        fresh.load(path)
        assert fresh.state_root() == kv_ledger.state_root()
        assert fresh.log() == kv_ledger.log()

    def test_tampered_args_detected(self, kv_ledger, tmp_path):
        kv_ledger.submit("kv_demo", "put", ["victim", "original"])
        fill_random(kv_ledger, 10)
        path = tmp_path / "ledger.ndjson"
        kv_ledger.save(path)
        text = path.read_text()
        path.write_text(text.replace("original", "originel", 1))

        fresh = Ledger()
        fresh.register_contract("kv_demo", KvDemoContract())
        with pytest.raises(ChainError) as err:
            fresh.load(path)
        assert err.value.code == "CHAIN_BROKEN"

    @pytest.mark.parametrize("field", ["seq", "prevHash", "txHash", "resultDigest", "method"])
    def test_any_field_mutation_detected(self, kv_ledger, tmp_path, field):
        fill_random(kv_ledger, 5)
        path = tmp_path / "ledger.ndjson"
        kv_ledger.save(path)
        lines = path.read_text().splitlines()
        record = json.loads(lines[2])
        if field == "seq":
            record["seq"] = 7
        elif field == "method":
            record["method"] = "get"
        else:
            digest = bytearray(bytes.fromhex(record[field]))
            digest[0] ^= 0xFF
            record[field] = bytes(digest).hex()
        lines[2] = json.dumps(record, sort_keys=True, separators=(",", ":"))
        path.write_text("".join(line + "\n" for line in lines))

        fresh = Ledger()
        fresh.register_contract("kv_demo", KvDemoContract())
        with pytest.raises(ChainError) as err:
            fresh.load(path)
        assert err.value.code == "CHAIN_BROKEN"

    def test_journal_appends_match_save(self, tmp_path):
        journaled = Ledger()
        journaled.register_contract("kv_demo", KvDemoContract())
        journaled.attach_journal(tmp_path / "journal.ndjson")
        fill_random(journaled, 25, seed=3)
        journaled.close()

        plain = Ledger()
        plain.register_contract("kv_demo", KvDemoContract())
        fill_random(plain, 25, seed=3)
        plain.save(tmp_path / "saved.ndjson")

        assert (tmp_path / "journal.ndjson").read_bytes() == (tmp_path / "saved.ndjson").read_bytes()

    def test_parse_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.ndjson"
        path.write_text("not json at all\n")
        with pytest.raises(ChainError) as err:
            parse_log_file(path)
        assert err.value.code == "CHAIN_BROKEN"


class TestTransactionRecord:
    def test_record_round_trip(self, kv_ledger):
        fill_random(kv_ledger, 5)
        for tx in kv_ledger.log():
            assert LedgerTransaction.from_record(json.loads(tx.to_line())) == tx


@settings(max_examples=40)
@given(
    ops=st.lists(
        st.tuples(st.text(min_size=1, max_size=8), st.text(max_size=16)),
        min_size=1,
        max_size=40,
    )
)
def test_determinism_property(ops):
    """Identical submit sequences produce byte-identical logs and roots."""
    ledgers = []
    for _ in range(2):
        ledger = Ledger()
        ledger.register_contract("kv_demo", KvDemoContract())
        for key, value in ops:
            ledger.submit("kv_demo", "put", [key, value])
        ledgers.append(ledger)
    a, b = ledgers
    assert a.state_root() == b.state_root()
    assert [t.to_line() for t in a.log()] == [t.to_line() for t in b.log()]
