"""Scripted multi-party scenarios over the simulated ledger.

A scenario file is YAML: a seed, ledger/authority configuration, actors with
external funding, and an ordered step list. Every step may carry an
``expect`` field naming the error it should fail with (default ``ok``); a
mismatch stops the run with a nonzero exit and the step label.

The runner keeps an independent shadow of note lineages (which masked
deposits feed every note), so reports can separate true taint rejections
from bloom false positives, and checks pool conservation after every step.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .authority import Authority, SanctionsList, TxGraph, load_sanctions, parse_sanctions
from .errors import PoolError
from .ledger import Ledger, LedgerConfig, TREASURY_ACCOUNT
from .wallet import Wallet


@dataclass
class StepOutcome:
    index: int
    label: str
    kind: str
    outcome: str
    detail: str = ""
    ok: bool = True

    def to_record(self) -> dict:
        return {
            "step": self.index,
            "label": self.label,
            "kind": self.kind,
            "outcome": self.outcome,
            "detail": self.detail,
            "ok": self.ok,
        }


@dataclass
class Metrics:
    steps: list = field(default_factory=list)
    pool_balance: int = 0
    expected_pool: int = 0
    wallet_total: int = 0
    burned: int = 0
    popcounts: list = field(default_factory=list)
    true_taint_rejections: int = 0
    false_taint_rejections: int = 0
    neighborhoods: list = field(default_factory=list)
    flagged_count: int = 0

    @property
    def conservation_delta(self) -> int:
        return self.pool_balance - self.expected_pool

    def to_records(self) -> list[dict]:
        records = [dict(record="step", **step.to_record()) for step in self.steps]
        records.append(
            {
                "record": "summary",
                "pool_balance": self.pool_balance,
                "expected_pool": self.expected_pool,
                "conservation_delta": self.conservation_delta,
                "wallet_total": self.wallet_total,
                "burned": self.burned,
                "true_taint_rejections": self.true_taint_rejections,
                "false_taint_rejections": self.false_taint_rejections,
                "flagged_count": self.flagged_count,
            }
        )
        for actor, popcount, inserted in self.popcounts:
            records.append(
                {"record": "popcount", "actor": actor, "popcount": popcount, "inserted": inserted}
            )
        for address, sizes in self.neighborhoods:
            records.append({"record": "neighborhood", "address": address, "sizes": sizes})
        return records


class ScenarioError(PoolError):
    pass


def load_scenario(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            spec = yaml.safe_load(handle)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"cannot parse scenario: {exc}") from exc
    if not isinstance(spec, dict) or "steps" not in spec:
        raise ScenarioError("scenario must be a mapping with a 'steps' list")
    return spec


class ScenarioRunner:
    """Executes one scenario and accumulates metrics."""

    def __init__(self, spec: dict, seed_override: Optional[int] = None):
        self.spec = spec
        seed = seed_override if seed_override is not None else spec.get("seed", 0)
        self.seed = int(seed)
        self.rng = random.Random(self.seed)
        ledger_args = dict(spec.get("ledger", {}))
        self.ledger = Ledger(LedgerConfig(**ledger_args))
        self.sanctions = self._load_sanctions(spec)
        self.graph = self._load_graph(spec)
        authority_args = dict(spec.get("authority", {}))
        self.authority = Authority(
            self.ledger,
            random.Random(self.seed + 1),
            sanctions=self.sanctions,
            graph=self.graph,
            hops=int(authority_args.get("hops", 2)),
            delay_blocks=int(authority_args.get("delay_blocks", 0)),
        )
        self.treasury = Wallet.create(
            self.ledger, random.Random(self.seed + 2), external="treasury",
            account=TREASURY_ACCOUNT,
        )
        self.actors: dict[str, Wallet] = {"treasury": self.treasury}
        self.externals: dict[str, str] = {}
        for actor in spec.get("actors", ()):
            name = actor["name"]
            external = actor.get("external", f"0x{name}")
            wallet = Wallet.create(self.ledger, self._actor_rng(name), external=external)
            self.actors[name] = wallet
            self.externals[name] = external
            funds = int(actor.get("funds", 0))
            if funds:
                self.ledger.fund_external(external, funds)
        # shadow lineage: note commitment -> frozenset of masked ancestors
        self.lineage: dict[int, frozenset] = {}
        self.flagged_masked: set[int] = set()
        self.expected_pool = 0
        self.burned = 0
        self.metrics = Metrics()

    def _actor_rng(self, name: str) -> random.Random:
        return random.Random(f"{self.seed}/{name}")

    @staticmethod
    def _load_sanctions(spec: dict) -> SanctionsList:
        raw = spec.get("sanctions", [])
        if isinstance(raw, dict) and "file" in raw:
            return load_sanctions(raw["file"])
        return parse_sanctions([str(line) for line in raw])

    @staticmethod
    def _load_graph(spec: dict) -> TxGraph:
        raw = spec.get("graph", [])
        if isinstance(raw, dict) and "file" in raw:
            return TxGraph.load(raw["file"])
        return TxGraph.parse([str(line) for line in raw])

    # -- shadow bookkeeping -------------------------------------------------

    def _all_wallets(self) -> list[Wallet]:
        return list(self.actors.values())

    def _snapshot_unspent(self) -> dict:
        snap = {}
        for wallet in self._all_wallets():
            for entry in wallet.utxos:
                if not entry.spent:
                    snap[entry.commitment] = entry
        return snap

    def _absorb_lineage(self, before: dict, deposit_wallet: Optional[Wallet] = None) -> None:
        for wallet in self._all_wallets():
            wallet.scan()
        spent_ancestors: set = set()
        for commitment, entry in before.items():
            if entry.spent:
                spent_ancestors |= self.lineage.get(commitment, frozenset())
        if deposit_wallet is not None and deposit_wallet.masked is not None:
            spent_ancestors |= {deposit_wallet.masked}
        base = frozenset(spent_ancestors)
        for wallet in self._all_wallets():
            for entry in wallet.utxos:
                if entry.commitment not in self.lineage:
                    self.lineage[entry.commitment] = base

    def _truly_tainted(self, wallet: Wallet, amount: int) -> bool:
        try:
            chosen = wallet._select_inputs(amount)
        except PoolError:
            return False
        for entry in chosen:
            if self.lineage.get(entry.commitment, frozenset()) & self.flagged_masked:
                return True
        return False

    # -- step execution ----------------------------------------------------------

    def run(self) -> tuple[Metrics, int]:
        exit_code = 0
        for index, raw in enumerate(self.spec.get("steps", [])):
            if not isinstance(raw, dict) or "do" not in raw:
                raise ScenarioError(f"step {index}: not a mapping with a 'do' field")
            label = str(raw.get("label", f"step-{index}"))
            kind = str(raw["do"])
            expect = str(raw.get("expect", "ok"))
            try:
                detail = self._execute(kind, raw)
                outcome = "ok"
            except PoolError as exc:
                outcome = type(exc).__name__
                detail = str(exc)
            except KeyError as exc:
                raise ScenarioError(f"step {index} ({kind}): missing field {exc}") from exc
            ok = outcome == expect
            self.metrics.steps.append(
                StepOutcome(index=index, label=label, kind=kind, outcome=outcome,
                            detail=str(detail), ok=ok)
            )
            if not ok:
                exit_code = 1
                break
            if self.ledger.pool_balance != self.expected_pool:
                self.metrics.steps.append(
                    StepOutcome(index=index, label=label, kind="conservation",
                                outcome="violated", ok=False)
                )
                exit_code = 1
                break
        self._finalize()
        return self.metrics, exit_code

    def _execute(self, kind: str, raw: dict) -> str:
        handler = getattr(self, f"_step_{kind}", None)
        if handler is None:
            raise ScenarioError(f"unknown step kind {kind!r}")
        return handler(raw) or ""

    def _wallet(self, name: str) -> Wallet:
        if name not in self.actors:
            raise ScenarioError(f"unknown actor {name!r}")
        return self.actors[name]

    def _step_deposit(self, raw: dict) -> str:
        wallet = self._wallet(raw["actor"])
        amount = int(raw["amount"])
        before = self._snapshot_unspent()
        wallet.deposit_flow(amount, self.authority)
        self.expected_pool += amount
        self._absorb_lineage(before, deposit_wallet=wallet)
        return f"deposited {amount}"

    def _step_transfer(self, raw: dict) -> str:
        sender = self._wallet(raw["from"])
        recipient = self._wallet(raw["to"])
        amount = int(raw["amount"])
        before = self._snapshot_unspent()
        tainted = self._truly_tainted(sender, amount)
        try:
            sender.transfer(recipient.account, amount)
        except PoolError as exc:
            if type(exc).__name__ == "TaintedLineage":
                if tainted:
                    self.metrics.true_taint_rejections += 1
                else:
                    self.metrics.false_taint_rejections += 1
            raise
        self._absorb_lineage(before)
        return f"transferred {amount}"

    def _step_withdraw(self, raw: dict) -> str:
        wallet = self._wallet(raw["actor"])
        amount = int(raw["amount"])
        address = str(raw["address"])
        before = self._snapshot_unspent()
        wallet.withdraw(amount, address)
        self.expected_pool -= amount
        self._absorb_lineage(before)
        return f"withdrew {amount} to {address}"

    def _step_onboard(self, raw: dict) -> str:
        sender = self._wallet(raw["from"])
        name = str(raw["to"])
        if name in self.actors:
            raise ScenarioError(f"actor {name!r} already exists")
        amount = int(raw["amount"])
        before = self._snapshot_unspent()
        link = sender.onboard_invite(amount)
        external = str(raw.get("external", f"0x{name}"))
        wallet = Wallet.redeem_invite(link, self.ledger, self._actor_rng(name), external=external)
        self.actors[name] = wallet
        self.externals[name] = external
        self._absorb_lineage(before)
        return f"onboarded {name} with {amount}"

    def _step_flag(self, raw: dict) -> str:
        if "depositor" in raw:
            external = str(raw["depositor"])
        else:
            external = self.externals[str(raw["deposit_of"])]
        self.authority.flag_external(external)
        commitment = self.authority.record_by_external[external]
        self.flagged_masked.add(self.authority.records[commitment].masked)
        return f"flagged deposit of {external}"

    def _step_burn(self, raw: dict) -> str:
        wallet = self._wallet(raw["actor"])
        destination = str(raw.get("to", "burn"))
        before = self._snapshot_unspent()
        wallet.scan()
        burned = 0
        for entry in list(wallet.utxos):
            if entry.spent or entry.amount == 0:
                continue
            if raw.get("all") or self._entry_tainted(entry):
                wallet.burn_illicit(entry, destination=destination)
                if destination == "burn":
                    self.burned += entry.amount
                burned += entry.amount
        self._absorb_lineage(before)
        return f"burned {burned} to {destination}"

    def _entry_tainted(self, entry) -> bool:
        return bool(self.lineage.get(entry.commitment, frozenset()) & self.flagged_masked)

    def _step_advance(self, raw: dict) -> str:
        blocks = int(raw.get("blocks", 1))
        self.ledger.advance_block(blocks)
        return f"advanced {blocks} blocks"

    def _step_poll(self, raw: dict) -> str:
        self.authority.poll()
        return "authority polled"

    def _step_contact(self, raw: dict) -> str:
        wallet = self._wallet(raw["actor"])
        peer = self._wallet(raw["peer"])
        wallet.post_contact(str(raw["peer"]), peer.account, peer.enc.enc_pk)
        return "contact posted"

    def _step_assert(self, raw: dict) -> str:
        kind = str(raw["kind"])
        expected = int(raw["equals"])
        if kind == "balance":
            wallet = self._wallet(raw["actor"])
            wallet.scan()
            actual = wallet.balance()
        elif kind == "pool":
            actual = self.ledger.pool_balance
        elif kind == "external":
            actual = self.ledger.external_balance(str(raw["address"]))
        elif kind == "flagged":
            actual = len(self.ledger.flagged_entries())
        else:
            raise ScenarioError(f"unknown assertion kind {kind!r}")
        if actual != expected:
            raise ScenarioError(f"assert {kind}: expected {expected}, got {actual}")
        return f"{kind} == {expected}"

    # -- reporting ----------------------------------------------------------------

    def _finalize(self) -> None:
        metrics = self.metrics
        metrics.pool_balance = self.ledger.pool_balance
        metrics.expected_pool = self.expected_pool
        metrics.burned = self.burned
        metrics.flagged_count = len(self.ledger.flagged_entries())
        total = 0
        for name, wallet in sorted(self.actors.items()):
            wallet.scan()
            total += wallet.balance()
            for entry in wallet.utxos:
                if not entry.spent:
                    metrics.popcounts.append(
                        (name, entry.utxo.chain_state.popcount(),
                         entry.utxo.chain_state.inserted_count)
                    )
        metrics.wallet_total = total
        hops = self.authority.hops
        for name in sorted(self.externals):
            external = self.externals[name]
            if self.graph and external.casefold() in self.graph.nodes:
                layers, _ = self.graph.bfs_layers(external, hops, reverse=True)
                sizes = []
                running = 0
                for layer in layers:
                    running += len(layer)
                    sizes.append(running)
                metrics.neighborhoods.append((external, sizes))


def render_report(metrics: Metrics, exit_code: int, out_dir: str, seed: int) -> None:
    """Write the human table, the JSONL records and the figures."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    records = metrics.to_records()
    with open(os.path.join(out_dir, "report.jsonl"), "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")
    lines = [f"scenario report (seed {seed})", ""]
    lines.append(f"{'#':>3}  {'label':<16} {'kind':<12} {'outcome':<20} ok")
    for step in metrics.steps:
        lines.append(
            f"{step.index:>3}  {step.label:<16} {step.kind:<12} {step.outcome:<20} "
            f"{'yes' if step.ok else 'NO'}"
        )
    lines.append("")
    lines.append(f"pool balance        {metrics.pool_balance}")
    lines.append(f"expected pool       {metrics.expected_pool}")
    lines.append(f"conservation delta  {metrics.conservation_delta}")
    lines.append(f"wallet total        {metrics.wallet_total}")
    lines.append(f"burned              {metrics.burned}")
    lines.append(f"flagged entries     {metrics.flagged_count}")
    lines.append(f"taint rejections    {metrics.true_taint_rejections} true, "
                 f"{metrics.false_taint_rejections} false-positive")
    lines.append(f"exit code           {exit_code}")
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")
    _render_figures(metrics, out_dir)


def _render_figures(metrics: Metrics, out_dir: str) -> None:
    import os

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    ok_steps = [s for s in metrics.steps if s.kind != "conservation"]
    ax.step(range(len(ok_steps)), _pool_trajectory(metrics, ok_steps), where="post")
    ax.set_xlabel("step")
    ax.set_ylabel("pool balance")
    ax.set_title("pool balance per step")
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "pool_balance.png"), metadata={"Software": "veilpool"})
    plt.close(fig)

    if metrics.popcounts:
        fig, ax = plt.subplots(figsize=(7, 4))
        counts = [popcount for _actor, popcount, _n in metrics.popcounts]
        ax.bar(range(len(counts)), counts)
        ax.set_xlabel("unspent note")
        ax.set_ylabel("chain state popcount")
        ax.set_title("bloom chain state occupancy")
        fig.tight_layout()
        fig.savefig(
            os.path.join(out_dir, "chain_state_popcounts.png"),
            metadata={"Software": "veilpool"},
        )
        plt.close(fig)


def _pool_trajectory(metrics: Metrics, steps: list) -> list:
    # reconstruct from deposit/withdraw outcomes; ends at the final balance
    trajectory = []
    value = 0
    for step in steps:
        if step.kind == "deposit" and step.outcome == "ok":
            value += int(step.detail.split()[1])
        elif step.kind == "withdraw" and step.outcome == "ok":
            value -= int(step.detail.split()[1])
        trajectory.append(value)
    return trajectory or [0]


def run_scenario_file(
    path: str, out_dir: Optional[str] = None, seed_override: Optional[int] = None
) -> tuple[Metrics, int]:
    spec = load_scenario(path)
    runner = ScenarioRunner(spec, seed_override=seed_override)
    metrics, exit_code = runner.run()
    if out_dir:
        render_report(metrics, exit_code, out_dir, runner.seed)
    return metrics, exit_code
