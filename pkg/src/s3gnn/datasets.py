"""Synthetic regression tasks with BFS oracles, plus the on-disk cache.

Tasks
-----
``barbell``
    One fixed barbell graph (two m-cliques bridged by a p-node path); per
    sample the source-clique nodes carry fresh uniform(-1, 1) values and
    every target-clique node must regress the mean of those values.  Inputs
    per node are (value, source_flag, target_flag); the loss mask covers
    the target clique only.  This forces communication across the
    bottleneck: no local neighborhood of a target node sees the sources.
``diameter`` / ``sssp`` / ``eccentricity``
    Connected graphs drawn from random and structured families with node
    counts inside a size range; targets come from breadth-first-search
    oracles (all-pairs for diameter/eccentricity, source node 0 for sssp).
    Inputs per node are (1, degree) plus a source indicator for sssp.

Datasets regenerate bit-identically from (task, params, seed); the cache
directory holds one edge-list file and one JSON targets file per sample
plus a manifest with the seeds, splits, and content hashes.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .graphs import (Graph, barabasi_albert_graph, barbell_graph,
                     caterpillar_graph, connected_components, ComponentStructure,
                     erdos_renyi_graph, graph_property, read_edge_list,
                     write_edge_list)
from .rng import Rng

TASKS = ("barbell", "diameter", "sssp", "eccentricity")
NODE_TASKS = ("barbell", "sssp", "eccentricity")
DEFAULT_FAMILIES = ("erdos_renyi", "barabasi_albert", "caterpillar")


@dataclass
class Sample:
    graph: Graph
    comps: ComponentStructure
    x: np.ndarray                      # (n, d_in) input features
    y_node: np.ndarray | None          # per-node targets, or None
    y_graph: float | None              # graph-level target, or None
    mask: np.ndarray | None            # supervised nodes; None means all


@dataclass
class Dataset:
    task: str
    samples: list[Sample]
    train_idx: list[int]
    val_idx: list[int]
    test_idx: list[int]
    seed: int
    params: dict = field(default_factory=dict)

    @property
    def d_in(self) -> int:
        return self.samples[0].x.shape[1]

    def split(self, name: str) -> list[Sample]:
        idx = {"train": self.train_idx, "val": self.val_idx, "test": self.test_idx}[name]
        return [self.samples[i] for i in idx]


def split_indices(count: int) -> tuple[list[int], list[int], list[int]]:
    """Deterministic 80/10/10 split in generation order."""
    n_val = max(1, count // 10)
    n_test = max(1, count // 10)
    n_train = count - n_val - n_test
    train = list(range(n_train))
    val = list(range(n_train, n_train + n_val))
    test = list(range(n_train + n_val, count))
    return train, val, test


def _check_split_minimum(count: int) -> None:
    train, val, test = split_indices(count)
    if min(len(train), len(val), len(test)) < 3:
        raise ValueError(
            f"count={count} leaves a split below the minimum of 3 samples")


def make_barbell_task(m: int, p: int, rng: Rng) -> Sample:
    """One barbell sample: regress the source-clique mean onto the target clique."""
    g = barbell_graph(m, p)
    comps = connected_components(g)
    n = g.n
    source = np.arange(m)
    target = np.arange(m + p, n)
    values = np.zeros(n)
    values[source] = rng.uniform_array(m, -1.0, 1.0)
    x = np.zeros((n, 3))
    x[:, 0] = values
    x[source, 1] = 1.0
    x[target, 2] = 1.0
    y = np.zeros(n)
    y[target] = values[source].mean()
    mask = np.zeros(n, dtype=bool)
    mask[target] = True
    return Sample(graph=g, comps=comps, x=x, y_node=y, y_graph=None, mask=mask)


def make_barbell_dataset(m: int, p: int, count: int, seed: int) -> Dataset:
    _check_split_minimum(count)
    rng = Rng(seed)
    samples = [make_barbell_task(m, p, rng.spawn(i)) for i in range(count)]
    train, val, test = split_indices(count)
    return Dataset(task="barbell", samples=samples, train_idx=train, val_idx=val,
                   test_idx=test, seed=seed, params={"m": m, "p": p, "count": count})


def _property_features(g: Graph, task: str) -> np.ndarray:
    cols = [np.ones(g.n), g.degrees()]
    if task == "sssp":
        src = np.zeros(g.n)
        src[0] = 1.0
        cols.append(src)
    return np.stack(cols, axis=1)


def _sample_connected_graph(families, min_n: int, max_n: int, rng: Rng,
                            retries: int = 100) -> Graph:
    for _ in range(retries):
        family = families[rng.randrange(len(families))]
        if family == "erdos_renyi":
            n = min_n + rng.randrange(max_n - min_n + 1)
            prob = rng.uniform(0.1, 0.3)
            g = erdos_renyi_graph(n, prob, rng)
        elif family == "barabasi_albert":
            n = min_n + rng.randrange(max_n - min_n + 1)
            attach = 1 + rng.randrange(3)
            g = barabasi_albert_graph(n, attach, rng)
        elif family == "caterpillar":
            legs = 1 + rng.randrange(4)
            lo = max(2, -(-min_n // (1 + legs)))       # ceil division
            hi = max(lo, max_n // (1 + legs))
            spine = lo + rng.randrange(hi - lo + 1)
            g = caterpillar_graph(spine, legs)
            if not (min_n <= g.n <= max_n):
                continue
        else:
            raise ValueError(f"unknown family {family!r} for property datasets")
        comps = connected_components(g)
        if comps.k == 1:
            return g
    raise RuntimeError(f"no connected graph from {families} after {retries} tries")


def make_property_dataset(task: str, count: int, min_n: int = 25, max_n: int = 35,
                          families=DEFAULT_FAMILIES, seed: int = 0) -> Dataset:
    """Connected-graph regression dataset with exact BFS targets."""
    if task not in ("diameter", "sssp", "eccentricity"):
        raise ValueError(f"unknown property task {task!r}")
    if not (4 <= min_n <= max_n <= 256):
        raise ValueError(f"size range [{min_n}, {max_n}] outside [4, 256]")
    _check_split_minimum(count)
    families = tuple(families)
    rng = Rng(seed)
    samples = []
    for i in range(count):
        g = _sample_connected_graph(families, min_n, max_n, rng.spawn(1000 + i))
        comps = connected_components(g)
        x = _property_features(g, task)
        if task == "diameter":
            y_graph = float(graph_property(g, "diameter"))
            samples.append(Sample(g, comps, x, None, y_graph, None))
        else:
            y = graph_property(g, task, source=0).astype(np.float64)
            samples.append(Sample(g, comps, x, y, None, None))
    train, val, test = split_indices(count)
    return Dataset(task=task, samples=samples, train_idx=train, val_idx=val,
                   test_idx=test, seed=seed,
                   params={"count": count, "min_n": min_n, "max_n": max_n,
                           "families": list(families)})


def make_dataset(task: str, seed: int, count: int, **kw) -> Dataset:
    if task == "barbell":
        return make_barbell_dataset(kw.get("m", 23), kw.get("p", 4), count, seed)
    return make_property_dataset(task, count, kw.get("min_n", 25),
                                 kw.get("max_n", 35),
                                 kw.get("families", DEFAULT_FAMILIES), seed)


# ---------------------------------------------------------------------------
# cache directory: sample_%04d.edges + sample_%04d.json + manifest.json


def _sample_doc(sample: Sample, task: str) -> dict:
    return {
        "task": task,
        "x": [[float(v) for v in row] for row in sample.x],
        "y_node": None if sample.y_node is None else [float(v) for v in sample.y_node],
        "y_graph": sample.y_graph,
        "mask": None if sample.mask is None else [int(v) for v in sample.mask],
    }


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def save_dataset(ds: Dataset, out_dir) -> str:
    """Write the cache; returns the manifest content hash."""
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i, sample in enumerate(ds.samples):
        edges_name = f"sample_{i:04d}.edges"
        targets_name = f"sample_{i:04d}.json"
        edges_path = os.path.join(out_dir, edges_name)
        targets_path = os.path.join(out_dir, targets_name)
        write_edge_list(sample.graph, edges_path)
        with open(targets_path, "w", encoding="utf-8") as fh:
            json.dump(_sample_doc(sample, ds.task), fh, sort_keys=True)
            fh.write("\n")
        entries.append({"edges": edges_name, "targets": targets_name,
                        "sha256_edges": _sha256(edges_path),
                        "sha256_targets": _sha256(targets_path)})
    manifest = {
        "task": ds.task, "seed": ds.seed, "params": ds.params,
        "count": len(ds.samples),
        "splits": {"train": ds.train_idx, "val": ds.val_idx, "test": ds.test_idx},
        "samples": entries,
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return _sha256(manifest_path)


def load_dataset(out_dir, verify_targets: bool = True) -> Dataset:
    """Read a cache back; optionally recheck every target against its BFS oracle."""
    with open(os.path.join(out_dir, "manifest.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    samples = []
    for entry in manifest["samples"]:
        g = read_edge_list(os.path.join(out_dir, entry["edges"]))
        with open(os.path.join(out_dir, entry["targets"]), "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        comps = connected_components(g)
        x = np.asarray(doc["x"], dtype=np.float64)
        y_node = None if doc["y_node"] is None else np.asarray(doc["y_node"], dtype=np.float64)
        y_graph = doc["y_graph"]
        mask = None if doc["mask"] is None else np.asarray(doc["mask"], dtype=bool)
        sample = Sample(g, comps, x, y_node, y_graph, mask)
        if verify_targets:
            _verify_sample_targets(sample, manifest["task"])
        samples.append(sample)
    return Dataset(task=manifest["task"], samples=samples,
                   train_idx=list(manifest["splits"]["train"]),
                   val_idx=list(manifest["splits"]["val"]),
                   test_idx=list(manifest["splits"]["test"]),
                   seed=int(manifest["seed"]), params=dict(manifest["params"]))


def _verify_sample_targets(sample: Sample, task: str) -> None:
    """Recompute oracle targets at load; raises on any mismatch."""
    if task == "diameter":
        want = float(graph_property(sample.graph, "diameter"))
        if want != sample.y_graph:
            raise ValueError(f"cached diameter {sample.y_graph} != oracle {want}")
    elif task in ("sssp", "eccentricity"):
        want = graph_property(sample.graph, task, source=0).astype(np.float64)
        if not np.array_equal(want, sample.y_node):
            raise ValueError(f"cached {task} targets disagree with the BFS oracle")
    elif task == "barbell":
        m = int(sample.x[:, 1].sum())
        mean = sample.x[sample.x[:, 1] > 0, 0].mean() if m else 0.0
        got = sample.y_node[sample.mask]
        if not np.allclose(got, mean, rtol=0, atol=0):
            raise ValueError("cached barbell targets disagree with the source mean")
