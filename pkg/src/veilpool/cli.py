"""Command line entry points: scenario runner, benches and registry audit.

Reports land in an output directory as a human table, JSONL records and
rendered figures. The seed can be overridden with --seed or VEILPOOL_SEED.
"""

from __future__ import annotations

import json
import os
import sys

import click

from . import bench as bench_mod
from . import bloom
from . import statements as st
from .authority import TxGraph
from .errors import PoolError
from .field import fe_to_bytes
from .hashing import zk_hash
from .scenario import ScenarioRunner, load_scenario, render_report


def _seed_override(seed):
    if seed is not None:
        return int(seed)
    env = os.environ.get("VEILPOOL_SEED")
    return int(env) if env else None


@click.group()
def main():
    """Privacy pool simulator: scenarios, benches and audits."""


@main.command("run")
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default="reports", show_default=True, help="Report directory.")
@click.option("--seed", default=None, help="Override the scenario seed.")
def run_cmd(scenario, out, seed):
    """Execute a scenario file and write its report."""
    try:
        spec = load_scenario(scenario)
        runner = ScenarioRunner(spec, seed_override=_seed_override(seed))
        metrics, exit_code = runner.run()
    except PoolError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    render_report(metrics, exit_code, out, runner.seed)
    for step in metrics.steps:
        mark = "ok " if step.ok else "FAIL"
        click.echo(f"[{mark}] {step.index:>3} {step.kind:<12} {step.outcome}")
    click.echo(
        f"pool={metrics.pool_balance} delta={metrics.conservation_delta} "
        f"flagged={metrics.flagged_count} report={out}/report.txt"
    )
    sys.exit(exit_code)


@main.command("bench-bloom")
@click.option("--m", default=1 << 14, show_default=True, help="Filter bits (power of two).")
@click.option("--k", default=2, show_default=True, help="Index functions per element.")
@click.option("--points", default=8, show_default=True, help="Number of sample points.")
@click.option("--max-n", default=1600, show_default=True, help="Largest insertion count.")
@click.option("--queries", default=20000, show_default=True, help="Fresh queries per point.")
@click.option("--seed", default=None, help="Deterministic seed.")
@click.option("--out", default="reports", show_default=True)
def bench_bloom_cmd(m, k, points, max_n, queries, seed, out):
    """False-positive rate sweep: analytic curve vs empirical counts."""
    seed = _seed_override(seed) or 0
    sample_at = bench_mod.linear_points(max_n, points)
    rows = bench_mod.bench_bloom(m, k, sample_at, queries, seed=seed)
    meta = {"m": m, "k": k, "queries": queries, "seed": seed}
    bench_mod.write_bloom_report(rows, out, meta)
    for row in rows:
        click.echo(f"n={row.n:>6}  analytic={row.analytic:.5f}  empirical={row.empirical:.5f}")
    click.echo(f"report written to {out}/bloom_fp.txt")


@main.command("bench-transitivity")
@click.option("--graph", "graph_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Edge-list file: 'from to [count]' per line.")
@click.option("--synthetic-degree", default=None, type=int,
              help="Generate a uniform tree of this degree instead.")
@click.option("--synthetic-depth", default=4, show_default=True, type=int)
@click.option("--start", default=None, help="Start address (default: tree root or first node).")
@click.option("--max-hops", default=4, show_default=True)
@click.option("--out", default="reports", show_default=True)
def bench_transitivity_cmd(graph_path, synthetic_degree, synthetic_depth, start, max_hops, out):
    """Per-hop neighborhood sizes with growth ratios."""
    if synthetic_degree is not None:
        graph, root = bench_mod.synthetic_tree(synthetic_degree, synthetic_depth)
        start = start or root
    elif graph_path is not None:
        graph = TxGraph.load(graph_path)
        start = start or sorted(graph.nodes)[0]
    else:
        raise click.UsageError("provide --graph or --synthetic-degree")
    try:
        rows = bench_mod.bench_transitivity(graph, start, max_hops)
    except PoolError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    meta = {"start": start, "max_hops": max_hops}
    bench_mod.write_growth_report(rows, out, meta)
    for row in rows:
        ratio = f"{row.ratio:.2f}" if row.ratio is not None else "-"
        click.echo(f"hops={row.hops}  size={row.size}  edges={row.visited_edges}  ratio={ratio}")
    click.echo(f"report written to {out}/transitivity.txt")


@main.command("audit")
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default="reports", show_default=True)
@click.option("--seed", default=None, help="Override the scenario seed.")
def audit_cmd(scenario, out, seed):
    """Run a scenario, then check the authority records against the registry."""
    try:
        spec = load_scenario(scenario)
        runner = ScenarioRunner(spec, seed_override=_seed_override(seed))
        _metrics, exit_code = runner.run()
    except PoolError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    if exit_code:
        click.echo("scenario failed; audit aborted", err=True)
        sys.exit(exit_code)
    problems = audit_registry(runner)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "audit.jsonl"), "w", encoding="utf-8") as handle:
        for line in problems["records"]:
            handle.write(json.dumps(line, sort_keys=True) + "\n")
    for line in problems["records"]:
        click.echo(json.dumps(line, sort_keys=True))
    if problems["failures"]:
        click.echo(f"AUDIT FAILED: {len(problems['failures'])} inconsistencies", err=True)
        sys.exit(1)
    click.echo("audit clean")


def audit_registry(runner: ScenarioRunner) -> dict:
    """Registry consistency: every flag entry derives from an authority record."""
    ledger = runner.ledger
    authority = runner.authority
    params = ledger.config.bloom_params
    failures = []
    records = []
    by_masked_key = {fe_to_bytes(rec.masked): rec for rec in authority.records.values()}
    for key, value in ledger.flagged_entries():
        record = by_masked_key.get(key)
        entry = {"record": "flag", "key": key.hex()}
        if record is None:
            entry["status"] = "no-authority-record"
            failures.append(entry)
        elif zk_hash([record.commitment, record.blinding]) != record.masked:
            entry["status"] = "mask-mismatch"
            failures.append(entry)
        elif st.chain_state_commitment(bloom.encode_single(record.masked, params)) != value:
            entry["status"] = "value-mismatch"
            failures.append(entry)
        elif not record.flagged:
            entry["status"] = "record-not-marked"
            failures.append(entry)
        else:
            entry["status"] = "ok"
        records.append(entry)
    for commitment, record in sorted(authority.records.items()):
        if record.flagged and fe_to_bytes(record.masked) not in ledger.smt.entries:
            entry = {"record": "flag", "key": fe_to_bytes(record.masked).hex(),
                     "status": "missing-from-registry"}
            failures.append(entry)
            records.append(entry)
    lockstep = (
        ledger.poi_tree.leaf_count + len(ledger._pending_status)
        == ledger.commitment_tree.leaf_count
    )
    records.append({"record": "lockstep", "status": "ok" if lockstep else "violated"})
    if not lockstep:
        failures.append(records[-1])
    return {"records": records, "failures": failures}


if __name__ == "__main__":
    main()
