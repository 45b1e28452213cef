import random

import pytest

from veilpool.authority import Authority, TxGraph, parse_sanctions
from veilpool.bloom import BloomParams
from veilpool.ledger import Ledger, LedgerConfig, TREASURY_ACCOUNT
from veilpool.wallet import Wallet


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


@pytest.fixture
def small_params():
    return BloomParams(m=64, k=2)


@pytest.fixture
def pool():
    """Small, fully wired pool: ledger, authority, treasury, two funded users."""
    config = LedgerConfig(tree_height=10, smt_height=32)
    ledger = Ledger(config)
    sanctions = parse_sanctions(["0xsanctioned"])
    graph = TxGraph.from_edges([("0xsanctioned", "0xmule"), ("0xmule", "0xnearby")])
    authority = Authority(
        ledger, random.Random(1), sanctions=sanctions, graph=graph, hops=2
    )
    treasury = Wallet.create(
        ledger, random.Random(2), external="treasury", account=TREASURY_ACCOUNT
    )
    alice = Wallet.create(ledger, random.Random(3), external="0xalice")
    bob = Wallet.create(ledger, random.Random(4), external="0xbob")
    ledger.fund_external("0xalice", 1000)
    ledger.fund_external("0xbob", 1000)
    return {
        "ledger": ledger,
        "authority": authority,
        "treasury": treasury,
        "alice": alice,
        "bob": bob,
    }
