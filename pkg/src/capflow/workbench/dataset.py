"""Dataset lifecycle: generate networks, solve them, track everything in a
manifest.

A dataset directory holds ``graphs/`` and ``solutions/`` plus a
``manifest.json`` listing every entry with its split tag and solution
paths per rheology. Builds are resumable (existing valid files are kept)
and deterministic: entry ``i`` uses generator seed ``(seed, i)``, so a
re-run with the same configuration reproduces the manifest byte for
byte.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import CapflowError, SchemaError
from ..fileio import read_graph, read_solution, write_graph, write_solution
from ..graph import BoundaryConditions, VascularGraph
from ..linear import solve_linear
from ..netgen import GeneratorConfig, generate_network
from ..nonlinear import FixedPointConfig, solve_nonlinear
from ..solution import FlowSolution

SPLITS = ("train", "val", "test")
RHEOLOGIES = ("linear", "nonlinear")


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    split: str
    graph: str
    solutions: Dict[str, str]


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    entries: Tuple[ManifestEntry, ...]
    generator_config: dict
    config_hash: str
    rheologies: Tuple[str, ...]

    def split(self, name: str) -> List[ManifestEntry]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return [e for e in self.entries if e.split == name]

    def load(self, entry: ManifestEntry, rheology: str
             ) -> Tuple[VascularGraph, BoundaryConditions, FlowSolution]:
        graph, bc = read_graph(self.root / entry.graph)
        if rheology not in entry.solutions:
            raise SchemaError(
                f"entry {entry.id} has no {rheology} solution")
        solution = read_solution(self.root / entry.solutions[rheology])
        return graph, bc, solution


def split_counts(count: int, fractions: Sequence[float]) -> Tuple[int, int, int]:
    """Partition ``count`` into train/val/test sizes by rounding the
    fractions; the train split absorbs the rounding remainder."""
    if len(fractions) != 3:
        raise ValueError("need 3 split fractions")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    n_val = round(count * fractions[1])
    n_test = round(count * fractions[2])
    n_train = count - n_val - n_test
    if min(n_train, n_val, n_test) < 0 or n_train == 0:
        raise ValueError("split fractions leave an empty train split")
    return n_train, n_val, n_test


def _config_hash(config: GeneratorConfig) -> str:
    canonical = json.dumps(asdict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _build_entry(args):
    """Generate + solve one dataset entry (worker-safe)."""
    (index, config_dict, rheologies, root, fp_dict) = args
    config = GeneratorConfig(**config_dict)
    root = Path(root)
    entry_id = f"g{index:05d}"
    graph_rel = f"graphs/{entry_id}.json"
    graph_path = root / graph_rel
    solutions: Dict[str, str] = {}

    derived = int(np.random.SeedSequence([config.seed, index])
                  .generate_state(1)[0])
    entry_config = replace(config, seed=derived)

    if graph_path.exists():
        try:
            graph, bc = read_graph(graph_path)
        except SchemaError:
            graph = None
    else:
        graph = None
    if graph is None:
        graph, bc = generate_network(entry_config)
        graph_path.parent.mkdir(parents=True, exist_ok=True)
        write_graph(graph, bc, graph_path)

    for rheology in rheologies:
        sol_rel = f"solutions/{entry_id}.{rheology}.json"
        sol_path = root / sol_rel
        if sol_path.exists():
            try:
                read_solution(sol_path)
                solutions[rheology] = sol_rel
                continue
            except SchemaError:
                pass
        try:
            if rheology == "linear":
                solution = solve_linear(graph, bc)
            else:
                solution = solve_nonlinear(
                    graph, bc, config=FixedPointConfig(**fp_dict))
        except CapflowError as exc:
            raise CapflowError(f"entry {entry_id}: {exc}") from exc
        sol_path.parent.mkdir(parents=True, exist_ok=True)
        write_solution(solution, sol_path)
        solutions[rheology] = sol_rel
    return entry_id, graph_rel, solutions


def build_dataset(config: GeneratorConfig, count: int,
                  fractions: Sequence[float], rheology: str,
                  out_dir, workers: int = 1,
                  fixed_point: Optional[FixedPointConfig] = None) -> Path:
    """Generate and solve ``count`` networks; returns the manifest path.

    ``rheology`` is ``linear``, ``nonlinear`` or ``both``. Existing valid
    entries are reused (resumable builds).
    """
    rheologies = RHEOLOGIES if rheology == "both" else (rheology,)
    if any(r not in RHEOLOGIES for r in rheologies):
        raise ValueError(f"unknown rheology {rheology!r}")
    n_train, n_val, n_test = split_counts(count, fractions)
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    fp = fixed_point or FixedPointConfig()

    jobs = [(i, asdict(config), rheologies, str(root),
             asdict(fp)) for i in range(count)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_build_entry, jobs))
    else:
        results = [_build_entry(job) for job in jobs]

    tags = ["train"] * n_train + ["val"] * n_val + ["test"] * n_test
    entries = [
        {"id": entry_id, "split": tag, "graph": graph_rel,
         "solutions": solutions}
        for (entry_id, graph_rel, solutions), tag in zip(results, tags)
    ]
    manifest = {
        "format_version": 1,
        "generator_config": asdict(config),
        "config_hash": _config_hash(config),
        "rheologies": list(rheologies),
        "count": count,
        "splits": {"train": n_train, "val": n_val, "test": n_test},
        "entries": entries,
    }
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read manifest {path}: {exc}") from exc
    if doc.get("format_version") != 1:
        raise SchemaError(f"{path}: unsupported manifest format_version")
    entries = tuple(
        ManifestEntry(id=e["id"], split=e["split"], graph=e["graph"],
                      solutions=dict(e["solutions"]))
        for e in doc["entries"])
    manifest = DatasetManifest(
        root=path.parent, entries=entries,
        generator_config=doc["generator_config"],
        config_hash=doc["config_hash"],
        rheologies=tuple(doc["rheologies"]),
    )
    _check_integrity(manifest)
    return manifest


def _check_integrity(manifest: DatasetManifest) -> None:
    """Every referenced file must exist before training starts."""
    for entry in manifest.entries:
        paths = [manifest.root / entry.graph] + \
            [manifest.root / rel for rel in entry.solutions.values()]
        for p in paths:
            if not p.exists():
                raise SchemaError(f"manifest references missing file {p}")
