"""The compliance authority: screening, masking, status service and flagging.

The authority ingests a sanctions list and an external transaction graph,
screens depositors directly and transitively (provenance walk over reversed
edges), assigns status-tree leaves through the ledger's compliance hook, runs
the deposit-bootstrapping service, and flags masked commitments into the
on-ledger sparse registry when a deposit turns out to be illicit.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from . import bloom
from . import statements as st
from .errors import (
    EpochLimitExceeded,
    GraphParseError,
    PoolError,
    SanctionsParseError,
    UnknownAddress,
    UnknownDeposit,
)
from .field import FieldElement, fe_to_bytes, random_field_element, random_bytes, to_field
from .hashing import zk_hash
from .keys import EncKeypair, SpendKeypair, encrypt_with_ephemeral
from .ledger import (
    ComplianceContext,
    Event,
    EventKind,
    Ledger,
    OpResult,
    PoiStatus,
    make_user_op,
)
from .trees import AppendTree


# -- sanctions ---------------------------------------------------------------


@dataclass(frozen=True)
class SanctionsList:
    addresses: frozenset
    source: str = ""

    def __contains__(self, address: str) -> bool:
        return _norm(address) in self.addresses


def _norm(address: str) -> str:
    return address.strip().casefold()


def load_sanctions(path: str) -> SanctionsList:
    """Newline-delimited addresses; '#' starts a comment."""
    with open(path, "r", encoding="utf-8") as handle:
        return parse_sanctions(handle.read().splitlines(), source=path)


def parse_sanctions(lines: Iterable[str], source: str = "") -> SanctionsList:
    addresses = set()
    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if len(line.split()) != 1:
            raise SanctionsParseError(f"line {number}: expected one address, got {raw!r}")
        addresses.add(_norm(line))
    return SanctionsList(addresses=frozenset(addresses), source=source)


# -- transaction graph ----------------------------------------------------------


class TxGraph:
    """Directed external transaction graph with multiplicity-weighted edges."""

    def __init__(self):
        self.nodes: set[str] = set()
        self._out: dict[str, dict[str, int]] = {}
        self._in: dict[str, dict[str, int]] = {}

    @classmethod
    def from_edges(cls, edges: Iterable[tuple]) -> "TxGraph":
        graph = cls()
        for edge in edges:
            src, dst = edge[0], edge[1]
            count = edge[2] if len(edge) > 2 else 1
            graph.add_edge(src, dst, count)
        return graph

    @classmethod
    def parse(cls, lines: Iterable[str], source: str = "") -> "TxGraph":
        """Edge list: "from to [count]" per line, '#' comments."""
        graph = cls()
        for number, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise GraphParseError(f"line {number}: expected 'from to [count]', got {raw!r}")
            count = 1
            if len(parts) == 3:
                try:
                    count = int(parts[2])
                except ValueError:
                    raise GraphParseError(f"line {number}: bad multiplicity {parts[2]!r}")
            graph.add_edge(parts[0], parts[1], count)
        return graph

    @classmethod
    def load(cls, path: str) -> "TxGraph":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.parse(handle.read().splitlines(), source=path)

    def add_edge(self, src: str, dst: str, count: int = 1) -> None:
        src, dst = _norm(src), _norm(dst)
        self.nodes.add(src)
        self.nodes.add(dst)
        self._out.setdefault(src, {})[dst] = self._out.get(src, {}).get(dst, 0) + count
        self._in.setdefault(dst, {})[src] = self._in.get(dst, {}).get(src, 0) + count

    def successors(self, node: str, reverse: bool = False) -> tuple:
        table = self._in if reverse else self._out
        return tuple(sorted(table.get(node, ())))

    def average_degree(self) -> float:
        if not self.nodes:
            return 0.0
        return sum(len(adjacent) for adjacent in self._out.values()) / len(self.nodes)

    def bfs_layers(self, start: str, hops: int, reverse: bool = False) -> tuple[list, int]:
        """Layered BFS up to ``hops``; returns (layers, visited edge count)."""
        start = _norm(start)
        if start not in self.nodes:
            raise UnknownAddress(f"address {start!r} not in graph")
        seen = {start}
        layers = [{start}]
        visited_edges = 0
        frontier = {start}
        for _ in range(hops):
            nxt = set()
            for node in frontier:
                for neighbor in self.successors(node, reverse=reverse):
                    visited_edges += 1
                    if neighbor not in seen:
                        seen.add(neighbor)
                        nxt.add(neighbor)
            layers.append(nxt)
            frontier = nxt
            if not frontier:
                break
        return layers, visited_edges

    def neighborhood(self, node: str, hops: int, reverse: bool = False) -> set:
        """All addresses reachable by a path of length <= hops."""
        if hops < 0:
            raise ValueError("hop count must be >= 0")
        layers, _ = self.bfs_layers(node, hops, reverse=reverse)
        result: set[str] = set()
        for layer in layers:
            result |= layer
        return result


def transitivity_check(
    graph: TxGraph, sanctions: SanctionsList, address: str, hops: int
) -> Optional[tuple]:
    """Provenance walk: is any sanctioned address within ``hops`` upstream?

    Returns the witness path (address, ..., sanctioned) or None when clean.
    Shortest path wins; ties break lexicographically.
    """
    address = _norm(address)
    if address not in graph.nodes:
        raise UnknownAddress(f"address {address!r} not in graph")
    best_path = {address: (address,)}
    frontier = [address]
    for _ in range(hops + 1):
        hits = sorted(node for node in frontier if node in sanctions.addresses)
        if hits:
            return min(best_path[node] for node in hits)
        nxt = []
        for node in sorted(frontier, key=lambda n: best_path[n]):
            for upstream in graph.successors(node, reverse=True):
                if upstream not in best_path:
                    best_path[upstream] = best_path[node] + (upstream,)
                    nxt.append(upstream)
        frontier = nxt
        if not frontier:
            break
    return None


def poi_status(
    depositor: Optional[str],
    graph: Optional[TxGraph],
    sanctions: Optional[SanctionsList],
    hops: int,
    parent_statuses: Sequence[PoiStatus] = (),
) -> PoiStatus:
    """Pure status decision: direct hit, transitive hit, or inheritance."""
    if parent_statuses:
        if any(status is PoiStatus.ILLICIT for status in parent_statuses):
            return PoiStatus.ILLICIT
        if any(status is PoiStatus.PENDING for status in parent_statuses):
            return PoiStatus.PENDING
        return PoiStatus.ALLOWED
    if depositor is None or sanctions is None:
        return PoiStatus.ALLOWED
    if depositor in sanctions:
        return PoiStatus.ILLICIT
    if graph is not None and _norm(depositor) in graph.nodes:
        if transitivity_check(graph, sanctions, depositor, hops) is not None:
            return PoiStatus.ILLICIT
    return PoiStatus.ALLOWED


# -- mask records -----------------------------------------------------------------


@dataclass
class MaskRecord:
    commitment: FieldElement
    blinding: FieldElement
    masked: FieldElement
    external: str = ""  # depositor address, learned when the deposit lands
    flagged: bool = False


@dataclass
class _PendingStatus:
    commitment: int
    due_block: int
    external: Optional[str] = None
    parents: tuple = ()


class Authority:
    """Single compliance agent polling the ledger and answering its hook."""

    def __init__(
        self,
        ledger: Ledger,
        rng: random.Random,
        sanctions: Optional[SanctionsList] = None,
        graph: Optional[TxGraph] = None,
        hops: int = 2,
        delay_blocks: int = 0,
    ):
        self.ledger = ledger
        self.rng = rng
        self.sanctions = sanctions or SanctionsList(frozenset())
        self.graph = graph
        self.hops = hops
        self.delay_blocks = delay_blocks
        self.spend = SpendKeypair.generate(rng)
        self.enc = EncKeypair.generate(rng)
        self.account = _account_id(self.spend.pk, self.enc.enc_pk)
        self.op_key = random_bytes(rng, 32)
        self.records: dict[int, MaskRecord] = {}
        self.record_by_external: dict[str, int] = {}
        self.status_db: dict[int, PoiStatus] = {}
        self._pending: list[_PendingStatus] = []
        self._mirror_pool = AppendTree(ledger.config.tree_height, ledger.config.root_history)
        self._mirror_bootstrap = AppendTree(ledger.config.tree_height, ledger.config.root_history)
        self._leaf_index: dict[int, int] = {}
        self._bootstrap_index: dict[int, int] = {}
        self._served: set[int] = set()
        self._event_cursor = 0
        self._register()
        ledger.register_compliance_hook(self.hook, self.account)

    def _register(self) -> None:
        result = self._submit(
            "register_user",
            {
                "spend_pk": self.spend.pk,
                "enc_pk": self.enc.enc_pk,
                "op_key": self.op_key,
                "external": "authority",
            },
        )
        if not result.ok:
            raise PoolError(f"authority registration failed: {result.error}")

    def _submit(self, name: str, args: dict) -> OpResult:
        nonce = self.ledger.next_nonce(self.account)
        op = make_user_op(self.op_key, self.account, nonce, name, args)
        return self.ledger.handle_ops([op])[0]

    # -- compliance hook ---------------------------------------------------

    def hook(self, ctx: ComplianceContext) -> PoiStatus:
        if ctx.kind == "deposit":
            record = self.records.get(ctx.commitment)
            if record is not None and ctx.depositor_external:
                record.external = ctx.depositor_external
                self.record_by_external.setdefault(ctx.depositor_external, ctx.commitment)
            if self.delay_blocks > 0:
                self._pending.append(
                    _PendingStatus(
                        commitment=ctx.commitment,
                        due_block=self.ledger.block_height + self.delay_blocks,
                        external=ctx.depositor_external,
                    )
                )
                self.status_db[ctx.commitment] = PoiStatus.PENDING
                return PoiStatus.PENDING
            status = self._screen(ctx.depositor_external)
        else:
            parents = [self.status_db.get(c, PoiStatus.PENDING) for c in ctx.parent_commitments]
            status = poi_status(None, None, None, self.hops, parents)
            if status is PoiStatus.PENDING:
                self._pending.append(
                    _PendingStatus(
                        commitment=ctx.commitment,
                        due_block=self.ledger.block_height,
                        parents=ctx.parent_commitments,
                    )
                )
        self.status_db[ctx.commitment] = status
        return status

    def _screen(self, external: Optional[str]) -> PoiStatus:
        return poi_status(external, self.graph, self.sanctions, self.hops)

    # -- polling loop ---------------------------------------------------------

    def poll(self) -> None:
        """Ingest new events, serve bootstrap requests, resolve due statuses."""
        self._ingest_events()
        self._resolve_pending()

    def _ingest_events(self) -> None:
        events = self.ledger.events
        while self._event_cursor < len(events):
            event = events[self._event_cursor]
            self._event_cursor += 1
            if event.kind is EventKind.NEW_COMMITMENT:
                commitment = int.from_bytes(event.payload[:32], "big")
                index, _ = self._mirror_pool.append(commitment)
                self._leaf_index.setdefault(commitment, index)
            elif event.kind is EventKind.BOOTSTRAP_INIT:
                self._serve_bootstrap(event)

    def _serve_bootstrap(self, event: Event) -> None:
        commitment = int.from_bytes(event.payload[:32], "big")
        enc_pk = event.payload[32:64]
        index, _ = self._mirror_bootstrap.append(commitment)
        self._bootstrap_index[commitment] = index
        if commitment in self._served:
            return
        blinding = to_field(int.from_bytes(random_bytes(self.rng, 32), "big"))
        masked = zk_hash([commitment, blinding])
        eph_seed = random_bytes(self.rng, 32)
        masked_enc = encrypt_with_ephemeral(enc_pk, fe_to_bytes(masked), eph_seed)
        masked_enc_hash = st.enc_digest(masked_enc, masked)
        path = self._mirror_bootstrap.prove_membership(index)
        statement = st.bootstrap_response_statement(
            self._mirror_bootstrap.root, masked_enc, masked_enc_hash
        )
        witness = st.BootstrapResponseWitness(
            commitment=commitment,
            path=path,
            blinding=blinding,
            masked=masked,
            enc_pk=enc_pk,
            eph_seed=eph_seed,
        )
        proof = st.prove(statement, witness)
        result = self._submit(
            "bootstrap_data",
            {
                "proof": proof.to_bytes(),
                "masked_enc": masked_enc,
                "masked_enc_hash": masked_enc_hash,
            },
        )
        if not result.ok:
            return  # proof failure aborts this record only
        self._served.add(commitment)
        self.records[commitment] = MaskRecord(
            commitment=commitment, blinding=blinding, masked=masked
        )

    def _resolve_pending(self) -> None:
        progress = True
        while progress:
            progress = False
            for entry in list(self._pending):
                status: Optional[PoiStatus] = None
                if entry.parents:
                    parents = [
                        self.status_db.get(c, PoiStatus.PENDING) for c in entry.parents
                    ]
                    decided = poi_status(None, None, None, self.hops, parents)
                    if decided is not PoiStatus.PENDING:
                        status = decided
                elif self.ledger.block_height >= entry.due_block:
                    status = self._screen(entry.external)
                if status is None:
                    continue
                result = self._submit(
                    "resolve_status",
                    {"commitment": entry.commitment, "status": status.value},
                )
                if result.ok:
                    self.status_db[entry.commitment] = status
                    self._pending.remove(entry)
                    progress = True

    # -- flagging -----------------------------------------------------------------

    def flag_deposit(self, commitment: int) -> Optional[OpResult]:
        """Mask-flag a recorded deposit; idempotent per commitment."""
        record = self.records.get(commitment)
        if record is None:
            raise UnknownDeposit(f"no mask record for commitment {commitment:#x}")
        if record.flagged:
            return None
        self._ingest_events()
        index = self._leaf_index.get(commitment)
        if index is None:
            raise UnknownDeposit("deposit commitment not yet in the pool tree")
        params = self.ledger.config.bloom_params
        single = bloom.encode_single(record.masked, params)
        value = st.chain_state_commitment(single)
        key = fe_to_bytes(record.masked)
        path = self._mirror_pool.prove_membership(index)
        statement = st.masking_statement(key, self._mirror_pool.root)
        witness = st.MaskingWitness(
            commitment=commitment, blinding=record.blinding, path=path
        )
        proof = st.prove(statement, witness)
        result = self._submit(
            "smt_flag", {"key": key, "value": value, "proof": proof.to_bytes()}
        )
        if not result.ok:
            if result.error == "EpochLimitExceeded":
                raise EpochLimitExceeded(result.detail)
            raise PoolError(f"flagging failed: {result.error}: {result.detail}")
        record.flagged = True
        return result

    def flag_external(self, external: str) -> Optional[OpResult]:
        commitment = self.record_by_external.get(external)
        if commitment is None:
            raise UnknownDeposit(f"no mask record for depositor {external!r}")
        return self.flag_deposit(commitment)

    # -- audit ---------------------------------------------------------------------

    def audit_entries(self) -> list[dict]:
        """Canonical record stream for registry consistency checks."""
        out = []
        for commitment in sorted(self.records):
            record = self.records[commitment]
            out.append(
                {
                    "commitment": commitment,
                    "masked": record.masked,
                    "blinding": record.blinding,
                    "flagged": record.flagged,
                    "external": record.external,
                }
            )
        return out


def _account_id(spend_pk: FieldElement, enc_pk: bytes) -> bytes:
    import hashlib

    return hashlib.sha256(b"veilpool.account.v1" + fe_to_bytes(spend_pk) + enc_pk).digest()
