"""Analysis benches: bloom false-positive curves and neighborhood growth.

Both benches are deterministic under a seed and emit three artifacts into an
output directory: a human-readable table, line-delimited JSON records, and a
rendered figure.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass
from typing import Optional, Sequence

from . import bloom
from .authority import TxGraph
from .field import random_field_element


@dataclass(frozen=True)
class BloomPoint:
    n: int
    analytic: float
    empirical: float


def bench_bloom(
    m: int,
    k: int,
    points: Sequence[int],
    queries: int,
    seed: int = 0,
) -> list[BloomPoint]:
    """Empirical vs analytic false-positive rate at each insertion count.

    One fresh query set is drawn up front and reused at every sample point,
    so the work is queries * k hashes regardless of how many points are
    sampled; inserted elements are never queried.
    """
    params = bloom.BloomParams(m=m, k=k)
    rng = random.Random(seed)
    sample_at = sorted(set(int(p) for p in points))
    if not sample_at or sample_at[0] < 0:
        raise ValueError("sample points must be non-negative")
    query_indices = []
    for _ in range(queries):
        element = random_field_element(rng)
        query_indices.append(bloom.bloom_indices(element, params))
    filt = bloom.BloomFilter(params)
    snapshots = {}
    inserted = 0
    for target in sample_at:
        while inserted < target:
            filt = filt.insert(random_field_element(rng))
            inserted += 1
        snapshots[target] = filt.bits
    rows = []
    for target in sample_at:
        bits = snapshots[target]
        hits = sum(
            1 for indices in query_indices if all(bits >> i & 1 for i in indices)
        )
        rows.append(
            BloomPoint(
                n=target,
                analytic=bloom.fp_rate(target, params),
                empirical=hits / queries if queries else 0.0,
            )
        )
    return rows


def write_bloom_report(rows: Sequence[BloomPoint], out_dir: str, meta: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "bloom_fp.jsonl"), "w", encoding="utf-8") as handle:
        handle.write(json.dumps({"record": "meta", **meta}, sort_keys=True) + "\n")
        for row in rows:
            handle.write(
                json.dumps(
                    {
                        "record": "point",
                        "n": row.n,
                        "analytic": row.analytic,
                        "empirical": row.empirical,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    lines = [
        "bloom false-positive bench "
        f"(m={meta['m']}, k={meta['k']}, queries={meta['queries']}, seed={meta['seed']})",
        "",
        f"{'n':>8}  {'analytic':>10}  {'empirical':>10}",
    ]
    for row in rows:
        lines.append(f"{row.n:>8}  {row.analytic:>10.5f}  {row.empirical:>10.5f}")
    with open(os.path.join(out_dir, "bloom_fp.txt"), "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")
    _render_bloom_figure(rows, out_dir, meta)


def _render_bloom_figure(rows: Sequence[BloomPoint], out_dir: str, meta: dict) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ns = [row.n for row in rows]
    ax.plot(ns, [row.analytic for row in rows], label="analytic", marker="")
    ax.plot(ns, [row.empirical for row in rows], label="empirical", marker="o", linestyle="none")
    ax.axhline(0.05, color="grey", linewidth=0.8, linestyle="--", label="5% line")
    ax.set_xlabel("inserted elements n")
    ax.set_ylabel("false-positive rate")
    ax.set_title(f"bloom filter m={meta['m']}, k={meta['k']}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "bloom_fp.png"), metadata={"Software": "veilpool"})
    plt.close(fig)


@dataclass(frozen=True)
class GrowthPoint:
    hops: int
    size: int
    visited_edges: int
    ratio: Optional[float]


def bench_transitivity(graph: TxGraph, start: str, max_hops: int) -> list[GrowthPoint]:
    """Cumulative neighborhood size and edge work per hop count."""
    rows = []
    previous_new: Optional[int] = None
    layers, _ = graph.bfs_layers(start, max_hops)
    cumulative = 0
    for hops in range(min(max_hops, len(layers) - 1) + 1):
        _, visited = graph.bfs_layers(start, hops)
        new_nodes = len(layers[hops]) if hops < len(layers) else 0
        cumulative += new_nodes
        ratio = None
        if previous_new not in (None, 0) and new_nodes:
            ratio = new_nodes / previous_new
        previous_new = new_nodes
        rows.append(
            GrowthPoint(hops=hops, size=cumulative, visited_edges=visited, ratio=ratio)
        )
    return rows


def synthetic_tree(degree: int, depth: int) -> tuple[TxGraph, str]:
    """Uniform-degree tree; edges point from each node to its children."""
    graph = TxGraph()
    root = "n0"
    counter = 1
    frontier = [root]
    for _ in range(depth):
        nxt = []
        for node in frontier:
            for _ in range(degree):
                child = f"n{counter}"
                counter += 1
                graph.add_edge(node, child)
                nxt.append(child)
        frontier = nxt
    return graph, root


def write_growth_report(rows: Sequence[GrowthPoint], out_dir: str, meta: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "transitivity.jsonl"), "w", encoding="utf-8") as handle:
        handle.write(json.dumps({"record": "meta", **meta}, sort_keys=True) + "\n")
        for row in rows:
            handle.write(
                json.dumps(
                    {
                        "record": "point",
                        "hops": row.hops,
                        "size": row.size,
                        "visited_edges": row.visited_edges,
                        "ratio": row.ratio,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    lines = [
        f"transitivity growth bench (start={meta['start']}, max_hops={meta['max_hops']})",
        "",
        f"{'hops':>5}  {'|N_n|':>8}  {'edges':>8}  {'ratio':>7}",
    ]
    for row in rows:
        ratio = f"{row.ratio:.2f}" if row.ratio is not None else "-"
        lines.append(f"{row.hops:>5}  {row.size:>8}  {row.visited_edges:>8}  {ratio:>7}")
    with open(os.path.join(out_dir, "transitivity.txt"), "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")
    _render_growth_figure(rows, out_dir, meta)


def _render_growth_figure(rows: Sequence[GrowthPoint], out_dir: str, meta: dict) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    hops = [row.hops for row in rows]
    sizes = [max(row.size, 1) for row in rows]
    ax.semilogy(hops, sizes, marker="o", label="|N_n|")
    ax.semilogy(
        hops,
        [max(row.visited_edges, 1) for row in rows],
        marker="s",
        linestyle="--",
        label="visited edges",
    )
    ax.set_xlabel("hop bound n")
    ax.set_ylabel("count (log scale)")
    ax.set_title("neighborhood growth")
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "transitivity.png"), metadata={"Software": "veilpool"})
    plt.close(fig)


def linear_points(max_n: int, count: int) -> list[int]:
    if count < 1 or max_n < 0:
        raise ValueError("need at least one point and a non-negative maximum")
    if count == 1:
        return [max_n]
    step = max_n / (count - 1)
    return sorted({round(i * step) for i in range(count)})
