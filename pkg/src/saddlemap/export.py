"""Serialization of landscapes: saddle lists, graphs, trajectories, grids and
state snapshots that allow restarting from disk."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import RunManifest
from .dynamics import SearchConfig, Trajectory
from .landscape import DetailRecord, Landscape, LandscapeConfig, LandscapeGraph, SaddleRecord
from .system import SystemSpec

SCHEMA_VERSION = 1
STATE_VERSION = 1
GRID_MARGIN = 0.1


def _floats(a) -> list:
    return [float(v) for v in np.asarray(a, dtype=float).reshape(-1)]


def _matrix(a) -> list:
    a = np.asarray(a, dtype=float)
    return [[float(v) for v in row] for row in a]


def _write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n")


# -- saddles.json ---------------------------------------------------------------

def saddles_to_dict(graph: LandscapeGraph) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "saddles": [
            {
                "id": s.id,
                "position": _floats(s.position),
                "morse_index": int(s.morse_index),
                "parents": [int(p) for p in s.parents if p != -1],
            }
            for s in graph.saddles
        ],
    }


def export_saddles_json(graph: LandscapeGraph, path) -> Path:
    _write_json(path, saddles_to_dict(graph))
    return Path(path)


def load_saddles_json(path) -> LandscapeGraph:
    data = json.loads(Path(path).read_text())
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported saddles schema version {data.get('schema_version')!r}")
    graph = LandscapeGraph()
    for obj in data["saddles"]:
        pos = np.array(obj["position"], dtype=float)
        parents = list(obj["parents"]) or [-1]
        graph.saddles.append(SaddleRecord(obj["id"], pos, obj["morse_index"], np.zeros((pos.shape[0], 0)), parents))
    return graph


# -- landscape.dot --------------------------------------------------------------

def graph_to_dot(graph: LandscapeGraph) -> str:
    lines = ["digraph landscape {", "  rankdir=TB;", "  node [shape=circle];"]
    by_index: dict[int, list[int]] = {}
    for s in graph.saddles:
        by_index.setdefault(s.morse_index, []).append(s.id)
    for index in sorted(by_index, reverse=True):
        nodes = " ".join(f'n{i} [label="{i} (index {index})"];' for i in by_index[index])
        lines.append(f"  {{ rank=same; {nodes} }}")
    for parent, child in graph.edges():
        lines.append(f"  n{parent} -> n{child};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_dot(graph: LandscapeGraph, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(graph_to_dot(graph))
    return path


# -- CSV --------------------------------------------------------------------------

def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if not isinstance(v, (int, np.integer)) else int(v) for v in row])
    return path


def trajectory_rows(land: Landscape, rec: DetailRecord) -> tuple[np.ndarray, np.ndarray]:
    """Recorded points and times, or a two-row straight segment when none were kept."""
    if rec.trajectory is not None:
        return rec.trajectory.times, rec.trajectory.points
    child = land.graph.saddles[rec.child].position
    start = land.graph.saddles[rec.parent].position if rec.parent != -1 else land.primary_x0
    return np.array([0.0, 1.0]), np.vstack([start, child])


def export_trajectories_csv(land: Landscape, directory) -> list[Path]:
    directory = Path(directory)
    d = land.spec.dim
    out = []
    for rec in land.graph.detail_records:
        times, points = trajectory_rows(land, rec)
        tag = "init" if rec.parent == -1 else str(rec.parent)
        rows = (np.concatenate([[t], p]) for t, p in zip(times, points))
        out.append(_write_csv(directory / f"{rec.child}_{tag}.csv", ["t"] + [f"x{i}" for i in range(1, d + 1)], rows))
    return out


def export_gnorm_csv(land: Landscape, directory) -> list[Path]:
    directory = Path(directory)
    out = []
    for entry in land.search_log:
        rows = ((i, g) for i, g in enumerate(entry["gnorm_history"]))
        out.append(_write_csv(directory / f"gnorm_{entry['search_id']}.csv", ["iteration", "gnorm"], rows))
    return out


def grid_bounds(boundary, margin: float = GRID_MARGIN) -> np.ndarray:
    """Bounding box expanded by ``margin`` times its extent (at least ``margin``)."""
    b = np.asarray(boundary, dtype=float)
    pad = np.maximum(margin * (b[:, 1] - b[:, 0]), margin)
    return np.column_stack([b[:, 0] - pad, b[:, 1] + pad])


def export_grid_csv(spec: SystemSpec, bounds, grid_n: int, path) -> Path:
    """Energy sampled on a regular 1-D or 2-D grid over ``bounds`` (d x 2)."""
    if spec.energy is None:
        raise ValueError("grid export needs an energy; force-only systems can only export points and trajectories")
    if spec.dim not in (1, 2):
        raise ValueError("grid export supports d = 1 or 2; use export_projection_csv for higher dimensions")
    b = np.asarray(bounds, dtype=float).reshape(spec.dim, 2)
    axes = [np.linspace(lo, hi, grid_n) for lo, hi in b]
    if spec.dim == 1:
        rows = ((x, spec.energy(np.array([x]))) for x in axes[0])
        return _write_csv(path, ["x", "E"], rows)
    rows = ((x, y, spec.energy(np.array([x, y]))) for x in axes[0] for y in axes[1])
    return _write_csv(path, ["x", "y", "E"], rows)


def project(points, projection) -> np.ndarray:
    P = np.asarray(projection, dtype=float)
    return np.atleast_2d(np.asarray(points, dtype=float)) @ P.T


def export_projection_csv(land: Landscape, projection, path) -> Path:
    """Saddle positions mapped through a linear projection (rows of ``projection``)."""
    P = np.asarray(projection, dtype=float)
    rows = []
    for s in land.graph.saddles:
        rows.append([s.id, s.morse_index, *project(s.position, P)[0]])
    return _write_csv(path, ["id", "morse_index"] + [f"p{i}" for i in range(1, P.shape[0] + 1)], rows)


# -- state snapshot ---------------------------------------------------------------

def _traj_to_dict(t: Trajectory | None):
    if t is None:
        return None
    return {"points": _matrix(t.points), "times": _floats(t.times)}


def _traj_from_dict(d):
    if d is None:
        return None
    return Trajectory(np.array(d["points"], dtype=float).reshape(len(d["times"]), -1), np.array(d["times"], dtype=float))


def state_to_dict(land: Landscape, manifest: RunManifest) -> dict:
    return {
        "state_version": STATE_VERSION,
        "manifest": manifest.to_dict(),
        "primary_x0": _floats(land.primary_x0),
        "max_index": land.max_index,
        "boundary": _matrix(land.boundary),
        "rng_state": land.rng.bit_generator.state,
        "saddles": [
            {
                "id": s.id,
                "position": _floats(s.position),
                "morse_index": s.morse_index,
                "unstable_basis": _matrix(s.unstable_basis),
                "parents": list(s.parents),
                "degenerate": bool(s.degenerate),
            }
            for s in land.graph.saddles
        ],
        "detail_records": [
            {"child": r.child, "parent": r.parent, "search_id": r.search_id, "trajectory": _traj_to_dict(r.trajectory)}
            for r in land.graph.detail_records
        ],
        "search_log": land.search_log,
        "merges": [{**m, "position": _floats(m["position"])} for m in land.merges],
    }


def save_state(land: Landscape, manifest: RunManifest, path) -> Path:
    _write_json(path, state_to_dict(land, manifest))
    return Path(path)


def load_state_dict(path) -> dict:
    data = json.loads(Path(path).read_text())
    if data.get("state_version") != STATE_VERSION:
        raise ValueError(f"unsupported state version {data.get('state_version')!r}")
    return data


def landscape_from_state(data: dict, spec: SystemSpec, search_cfg: SearchConfig, cfg: LandscapeConfig) -> Landscape:
    land = Landscape(spec, search_cfg, cfg, data["primary_x0"])
    land.max_index = data["max_index"]
    land.boundary = np.array(data["boundary"], dtype=float)
    land.rng.bit_generator.state = data["rng_state"]
    d = spec.dim
    for s in data["saddles"]:
        basis = np.array(s["unstable_basis"], dtype=float).reshape(d, -1)
        land.graph.saddles.append(SaddleRecord(s["id"], np.array(s["position"], dtype=float), s["morse_index"],
                                               basis, list(s["parents"]), s.get("degenerate", False)))
    for r in data["detail_records"]:
        land.graph.detail_records.append(DetailRecord(r["child"], r["parent"], _traj_from_dict(r["trajectory"]),
                                                      r.get("search_id", -1)))
    land.search_log = list(data["search_log"])
    land.merges = [{**m, "position": np.array(m["position"], dtype=float)} for m in data["merges"]]
    return land


def export_bundle(land: Landscape, manifest: RunManifest, out_dir, *, json_=True, dot=True, csv_=True,
                  grid=True, grid_n: int = 100, projection=None) -> list[Path]:
    """Write the requested exports under ``out_dir``; returns the paths written."""
    out = Path(out_dir)
    written = []
    if json_:
        written.append(export_saddles_json(land.graph, out / "saddles.json"))
    if dot:
        written.append(export_dot(land.graph, out / "landscape.dot"))
    if csv_:
        written += export_trajectories_csv(land, out / "trajectories")
        written += export_gnorm_csv(land, out)
    if grid:
        if projection is not None:
            written.append(export_projection_csv(land, projection, out / "projection.csv"))
        elif land.spec.energy is not None and land.spec.dim in (1, 2):
            written.append(export_grid_csv(land.spec, grid_bounds(land.boundary), grid_n, out / "grid.csv"))
    manifest_path = out / "manifest.json"
    _write_json(manifest_path, manifest.to_dict())
    written.append(manifest_path)
    return written
