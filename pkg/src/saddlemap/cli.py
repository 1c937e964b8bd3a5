"""Command-line entry point: ``saddlemap <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, export, gallery
from .config import ConfigError, ResolvedConfig, RunManifest, load_raw, validate_config
from .dynamics import hisd_search, sd_search, verify_operator
from .eigen import give_initial_eigenvectors
from .landscape import Landscape

log = logging.getLogger("saddlemap")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
LOG_ENV = "SADDLEMAP_LOG_LEVEL"


def _setup_logging(verbose: bool):
    level = os.environ.get(LOG_ENV, "INFO" if verbose else "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)


def _vector(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _resolve(path, seed=None) -> ResolvedConfig:
    raw = load_raw(path)
    if seed is not None:
        raw["rng_seed"] = seed
    return validate_config(raw)


def _export_opts(resolved: ResolvedConfig) -> dict:
    e = resolved.values["export"]
    return {"grid_n": int(e.get("grid_n", 100)), "projection": e.get("projection")}


def _apply_restarts(land: Landscape, restarts: list):
    for r in restarts:
        if r["type"] == "saddle":
            land.restart_from_saddle(int(r["id"]), r["perturbation"], int(r["max_index"]))
        else:
            land.restart_from_point(r["point"], int(r["max_index"]))


def _load_landscape(state_path):
    data = export.load_state_dict(state_path)
    manifest = RunManifest.from_dict(data["manifest"])
    resolved = validate_config(manifest.config)
    spec = resolved.build_system()
    land = export.landscape_from_state(data, spec, resolved.search_config(),
                                       resolved.landscape_config(manifest.seed))
    return land, manifest, resolved


def cmd_validate(args) -> int:
    resolved = _resolve(args.config, args.seed)
    resolved.build_system()
    json.dump({"config": resolved.values, "defaults_applied": resolved.defaults_applied,
               "warnings": resolved.warnings}, sys.stdout, indent=2)
    print()
    return EXIT_OK


def cmd_run(args) -> int:
    resolved = _resolve(args.config, args.seed)
    spec = resolved.build_system()
    manifest = RunManifest.from_resolved(resolved, args.seed)
    land = Landscape(spec, resolved.search_config(), resolved.landscape_config(manifest.seed),
                     resolved.values["initial_point"])
    t0 = time.perf_counter()
    land.run()
    if not args.no_restarts:
        _apply_restarts(land, resolved.values["restarts"])
    manifest.duration = time.perf_counter() - t0
    out = Path(args.out)
    export.save_state(land, manifest, out / "state.json")
    export.export_bundle(land, manifest, out, **_export_opts(resolved))
    print(f"{len(land.saddles)} saddles found; counts by index {land.graph.counts_by_index()}; output in {out}")
    return EXIT_OK


def cmd_search(args) -> int:
    resolved = _resolve(args.config, args.seed)
    spec = resolved.build_system()
    cfg = resolved.search_config(args.index)
    x0 = np.array(resolved.values["initial_point"])
    if cfg.saddle_index == 0:
        out = sd_search(spec, cfg, x0)
    else:
        V0 = resolved.values["initial_eigen_vectors"]
        if V0 is not None:
            V0 = np.asarray(V0)[:, : cfg.saddle_index]
        else:
            rng = np.random.default_rng(resolved.values["rng_seed"])
            V0 = give_initial_eigenvectors(verify_operator(spec, cfg), x0, cfg.saddle_index, rng).V
        out = hisd_search(spec, cfg, x0, V0)
    result = {
        "status": out.status,
        "iterations": out.iterations,
        "position": [float(v) for v in out.x_final],
        "morse_index": out.morse_index,
        "degenerate": out.degenerate,
        "gradient_norm": out.gnorm_history[-1] if out.gnorm_history else None,
    }
    print(json.dumps(result, indent=2))
    return EXIT_OK if out.converged else EXIT_RUNTIME


def _finish_restart(args, land, manifest, resolved) -> int:
    out_state = Path(args.out) if args.out else Path(args.state)
    export.save_state(land, manifest, out_state)
    print(f"{len(land.saddles)} saddles; counts by index {land.graph.counts_by_index()}; state written to {out_state}")
    return EXIT_OK


def cmd_restart_point(args) -> int:
    land, manifest, resolved = _load_landscape(args.state)
    x = _vector(args.point)
    if len(x) != land.spec.dim:
        raise ConfigError(f"restart point has {len(x)} entries, system dim is {land.spec.dim}")
    land.restart_from_point(x, args.max_index)
    return _finish_restart(args, land, manifest, resolved)


def cmd_restart_saddle(args) -> int:
    land, manifest, resolved = _load_landscape(args.state)
    p = _vector(args.perturbation)
    if len(p) != land.spec.dim:
        raise ConfigError(f"perturbation has {len(p)} entries, system dim is {land.spec.dim}")
    land.restart_from_saddle(args.saddle_id, p, args.max_index)
    return _finish_restart(args, land, manifest, resolved)


def cmd_export(args) -> int:
    land, manifest, resolved = _load_landscape(args.state)
    chosen = {"json_": args.json, "dot": args.dot, "csv_": args.csv, "grid": args.grid}
    if not any(chosen.values()):
        chosen = {k: True for k in chosen}
    out = Path(args.out) if args.out else Path(args.state).parent
    paths = export.export_bundle(land, manifest, out, **chosen, **_export_opts(resolved))
    print(f"wrote {len(paths)} files to {out}")
    return EXIT_OK


def cmd_gallery(args) -> int:
    kwargs = {}
    if args.name == "cubic" and args.n is not None:
        kwargs["n"] = args.n
    if args.name == "phase_field":
        if args.n is not None:
            kwargs["n_grid"] = args.n
        if args.kappa is not None:
            kwargs["kappa"] = args.kappa
    g = gallery.get(args.name, **kwargs)
    text = json.dumps(g.config, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="saddlemap", description="Saddle point search and solution landscapes.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="resolve a config and print it with defaults")
    s.add_argument("config")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("run", help="build the full landscape and export it")
    s.add_argument("config")
    s.add_argument("--out", default="saddlemap_out")
    s.add_argument("--seed", type=int)
    s.add_argument("--no-restarts", action="store_true", help="skip restarts listed in the config")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("search", help="single saddle search from the initial point")
    s.add_argument("config")
    s.add_argument("--index", type=int, help="target index (default: saddle_index or max_index)")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("restart-point", help="restart the landscape from a new point")
    s.add_argument("state")
    s.add_argument("point", help="comma-separated coordinates")
    s.add_argument("max_index", type=int)
    s.add_argument("--out", help="write the updated state here instead of in place")
    s.set_defaults(func=cmd_restart_point)

    s = sub.add_parser("restart-saddle", help="restart from an existing saddle plus a perturbation")
    s.add_argument("state")
    s.add_argument("saddle_id", type=int)
    s.add_argument("perturbation", help="comma-separated vector; put '--' before it if it starts with '-'")
    s.add_argument("max_index", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_restart_saddle)

    s = sub.add_parser("export", help="write exports from a saved state")
    s.add_argument("state")
    s.add_argument("--json", action="store_true")
    s.add_argument("--dot", action="store_true")
    s.add_argument("--csv", action="store_true")
    s.add_argument("--grid", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("gallery", help="print or save a built-in reference config")
    s.add_argument("name", choices=sorted(gallery.GALLERY))
    s.add_argument("--n", type=int, help="dimension for cubic, grid size for phase_field")
    s.add_argument("--kappa", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_gallery)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return args.func(args)
    except ConfigError as exc:
        key = f" [{exc.key}]" if exc.key else ""
        print(f"config error{key}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
