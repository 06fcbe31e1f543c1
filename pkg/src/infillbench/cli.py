"""Command-line entry point for reproducible benchmark runs.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, domain, fem, porous, psl, rasterize, topopt, volio, voronoi
from .domain import (DomainError, RegionSelector, VoxelDomain, apply_fixation,
                     apply_load, load_preset, load_preset_mesh, load_voxel_model,
                     mark_passive, save_preset, voxelize_mesh, PASSIVE, VOID)
from .mesh import MeshError, load_obj, load_stl
from .rasterize import MaterialField, match_budget, voxelize_graph
from .topopt import OptimizationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_VOLATILE_KEYS = {"wall_s", "runtimes", "export_paths"}


class ConfigError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


# --------------------------------------------------------------- helpers

def _worker_threads() -> int:
    try:
        n = int(os.environ.get("SGLD_THREADS", "0"))
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def _strip_volatile(obj):
    if isinstance(obj, dict):
        return {k: _strip_volatile(v) for k, v in sorted(obj.items())
                if k not in _VOLATILE_KEYS}
    if isinstance(obj, list):
        return [_strip_volatile(v) for v in obj]
    if isinstance(obj, float):
        return float(f"{obj:.12g}")
    return obj


def report_hash(report_dict: dict) -> str:
    """Stable digest of a report with timing fields removed."""
    canon = json.dumps(_strip_volatile(report_dict), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()


def _dataclass_config(cls, blob: dict, context: str):
    allowed = {f.name for f in dataclasses.fields(cls)} - {"solver"}
    unknown = set(blob) - allowed
    if unknown:
        raise ConfigError(f"unknown {context} config keys: {sorted(unknown)} "
                          f"(allowed: {sorted(allowed)})")
    try:
        return cls(**blob)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {context} config: {exc}") from exc


def _solver_config(blob: dict) -> fem.SolverConfig:
    return _dataclass_config(fem.SolverConfig, blob, "solver")


def _load_mesh_any(path: Path):
    if path.suffix.lower() == ".stl":
        return load_stl(path)
    if path.suffix.lower() == ".obj":
        return load_obj(path)
    raise ConfigError(f"unsupported mesh format: {path}")


def _material_labels(field: MaterialField) -> np.ndarray:
    labels = np.zeros(field.dom.n_elements, dtype=np.uint8)
    labels[field.rho > 0.5] = domain.SOLID
    labels[field.dom.labels.ravel(order="F") == PASSIVE] = PASSIVE
    nx, ny, nz = field.dom.dims
    return labels.reshape((nx, ny, nz), order="F")


def _load_design(path: Path, dom: VoxelDomain):
    """A design on disk: label volume (.vox) or density volume (.f32)."""
    if path.name.endswith(".vox"):
        labels, spacing, origin = volio.load_labels(path)
        if tuple(labels.shape) != tuple(dom.dims):
            raise ConfigError(f"design grid {labels.shape} does not match "
                              f"preset grid {tuple(dom.dims)}")
        rho = (labels.ravel(order="F") != VOID).astype(np.float64)
        return MaterialField(rho, dom, {"strategy": f"import:{path.name}"})
    if path.name.endswith(".f32"):
        values, spacing, origin = volio.load_f32(path)
        if tuple(values.shape[:3]) != tuple(dom.dims):
            raise ConfigError("design grid does not match preset grid")
        rho = np.clip(values[..., 0].ravel(order="F"), 0.0, 1.0)
        rho[dom.labels.ravel(order="F") == VOID] = 0.0
        rho[dom.labels.ravel(order="F") == PASSIVE] = 1.0
        return MaterialField(rho, dom, {"strategy": f"import:{path.name}"})
    raise ConfigError(f"unsupported design format: {path}")


def _solid_field(dom: VoxelDomain) -> MaterialField:
    rho = (dom.labels.ravel(order="F") != VOID).astype(np.float64)
    return MaterialField(rho, dom, {"strategy": "solid"})


# ----------------------------------------------------------- subcommands

def cmd_preset(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.mesh:
        dom = voxelize_mesh(_load_mesh_any(Path(args.mesh)), args.res)
        dom.mesh_path = str(Path(args.mesh).resolve())
    elif args.voxels:
        dom = load_voxel_model(args.voxels)
    else:
        raise ConfigError("either --mesh or --voxels is required")
    if not args.fix:
        raise ConfigError("no fixation: at least one --fix selector required")
    if not args.load:
        raise ConfigError("no load: at least one --load selector required")
    for spec in args.fix:
        apply_fixation(dom, RegionSelector.parse(spec))
    for spec in args.load:
        if ",f=" not in spec:
            raise ConfigError(f"load spec {spec!r} needs ',f=fx,fy,fz' suffix")
        sel, force = spec.split(",f=")
        apply_load(dom, RegionSelector.parse(sel),
                   np.asarray([float(v) for v in force.split(",")]))
    if args.passive:
        mark_passive(dom, args.passive, extra_dilation=args.passive_dilation)
    dom.check()
    path = out / f"{args.name}.preset.json"
    save_preset(dom, path)
    print(f"wrote {path}")
    return EXIT_OK


_STRATEGIES = ("topopt", "porous", "voronoi", "psl", "import")
_GRAPH_KEYS = {
    "voronoi": {"V0", "thickness", "r_hat_lo", "r_hat_hi", "rho_ratio",
                "batch_n", "aux_count"},
    "psl": {"V0", "thickness", "step_h", "angle_limit", "seed_spacing",
            "max_points", "merge_distance"},
    "import": {"graph", "thickness", "V0"},
}


def _validate_manifest(blob: dict) -> dict:
    allowed = {"preset", "strategy", "config", "solver", "seed", "out"}
    unknown = set(blob) - allowed
    if unknown:
        raise ConfigError(f"unknown manifest keys: {sorted(unknown)}")
    for key in ("preset", "strategy"):
        if key not in blob:
            raise ConfigError(f"manifest missing required key {key!r}")
    if blob["strategy"] not in _STRATEGIES:
        raise ConfigError(f"unknown strategy {blob['strategy']!r} "
                          f"(choose from {_STRATEGIES})")
    cfg = blob.get("config", {})
    strategy = blob["strategy"]
    if strategy == "topopt":
        _dataclass_config(topopt.TopOptConfig, cfg, "topopt")
    elif strategy == "porous":
        _dataclass_config(porous.PorousConfig, cfg, "porous")
    else:
        unknown = set(cfg) - _GRAPH_KEYS[strategy]
        if unknown:
            raise ConfigError(f"unknown {strategy} config keys: "
                              f"{sorted(unknown)}")
        if strategy in ("voronoi", "psl") and "seed" not in blob:
            if strategy == "voronoi":
                raise ConfigError("stochastic strategy requires a seed")
    return blob


def _run_graph_strategy(dom, strategy, cfg, solver_cfg, seed, out):
    baseline, sigma, vm = analysis.evaluate_design(_solid_field(dom), dom,
                                                   solver_cfg)
    V0 = float(cfg.get("V0", 0.3))
    thickness = int(cfg.get("thickness", 1))
    if strategy == "voronoi":
        mesh = load_preset_mesh(dom)
        if mesh is None:
            raise ConfigError("voronoi strategy needs the preset's hull mesh")
        diag = float(np.linalg.norm(mesh.bbox[1] - mesh.bbox[0]))
        rho_ratio = float(cfg.get("rho_ratio", 0.25))
        # the smallest mapped radius r_hat*rho must stay resolvable (~2 voxels)
        lo = max(float(cfg.get("r_hat_lo", 0.03)) * diag,
                 2.0 * dom.spacing / rho_ratio)
        hi = max(float(cfg.get("r_hat_hi", 0.3)) * diag, 2.0 * lo)
        cache = {}

        def gen(r_hat):
            if r_hat not in cache:
                cache[r_hat] = voronoi.generate_voronoi_infill(
                    dom, vm, mesh, r_hat, rho_ratio, seed=seed,
                    batch_n=int(cfg.get("batch_n", 1024)))
            return cache[r_hat]

        field, param, trace = match_budget(gen, dom, V0, thickness,
                                           lo=lo, hi=hi, decreasing=True)
        graph = gen(param)
    elif strategy == "psl":
        pcfg = psl.PSLConfig(
            step_h=float(cfg.get("step_h", 0.5)),
            angle_limit=float(cfg.get("angle_limit", 30.0)),
            merge_distance=float(cfg.get("merge_distance",
                                         4.0 * dom.spacing)),
            seed_spacing=float(cfg.get("seed_spacing", 4.0 * dom.spacing)),
            max_points=int(cfg.get("max_points", 4000)))
        graph, field, trace = psl.psl_infill(dom, sigma, thickness, V0, pcfg)
    else:                                   # import
        if "graph" not in cfg:
            raise ConfigError("import strategy needs config.graph (OBJ path)")
        graph = volio.load_edge_graph(cfg["graph"])
        if "V0" in cfg:
            def gen_t(_):
                return graph
            # budget matched on thickness layers for imported graphs
            best = None
            trace = []
            for t in range(1, 13):
                f = voxelize_graph(graph, dom, t)
                trace.append((t, f.volume_fraction()))
                if best is None or abs(f.volume_fraction() - V0) < \
                        abs(best[1] - V0):
                    best = (f, f.volume_fraction(), t)
                if f.volume_fraction() >= V0:
                    break
            field, thickness = best[0], best[2]
        else:
            field = voxelize_graph(graph, dom, thickness)
            trace = []
    report, design_sigma, design_vm = analysis.evaluate_design(field, dom,
                                                               solver_cfg)
    dev = analysis.deviation_field(sigma, design_sigma, field.rho > 0.5)
    report.deviation_stats = dev.stats()
    volio.save_edge_graph(out / "graph.obj", graph)
    volio.save_labels(out / "design.vox", _material_labels(field),
                      dom.spacing, dom.origin)
    nx, ny, nz = dom.dims
    volio.save_f32(out / "vm.f32",
                   design_vm.reshape((nx, ny, nz, 1), order="F"),
                   dom.spacing, dom.origin)
    volio.save_f32(out / "deviation.f32",
                   dev.values.reshape((nx, ny, nz, 1), order="F"),
                   dom.spacing, dom.origin)
    report.export_paths = {"graph": "graph.obj", "design": "design.vox",
                           "vm": "vm.f32", "deviation": "deviation.f32"}
    report.params.update({"V0": V0, "thickness": thickness,
                          "seed": seed, "budget_trace": trace})
    report.strategy = strategy
    return report


def _run_density_strategy(dom, strategy, cfg, solver_blob, out):
    if strategy == "topopt":
        config = _dataclass_config(topopt.TopOptConfig, dict(cfg), "topopt")
        config.solver = _solver_config(solver_blob)
        field, opt = topopt.run_topopt(dom, config, out_dir=out)
    else:
        config = _dataclass_config(porous.PorousConfig, dict(cfg), "porous")
        config.solver = _solver_config(solver_blob)
        field, opt = porous.run_porous(dom, config)
    nx, ny, nz = dom.dims
    volio.save_f32(out / "density.f32",
                   field.rho_bar.reshape((nx, ny, nz, 1), order="F"),
                   dom.spacing, dom.origin)
    report, sigma, vm = analysis.evaluate_design(field, dom, config.solver)
    volio.save_f32(out / "vm.f32", vm.reshape((nx, ny, nz, 1), order="F"),
                   dom.spacing, dom.origin)
    report.strategy = strategy
    report.params.update({k: v for k, v in opt.params.items()
                          if isinstance(v, (int, float, str, bool))})
    report.compliance_history = opt.compliance_history
    report.export_paths = {"density": "density.f32", "vm": "vm.f32"}
    return report


def cmd_run(args) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        raise ConfigError(f"manifest not found: {manifest_path}")
    blob = _validate_manifest(json.loads(manifest_path.read_text()))
    out = Path(args.out or blob.get("out") or manifest_path.parent / "run")
    resolved = {"manifest": str(manifest_path), "out": str(out),
                "threads": _worker_threads(), **blob}
    if args.dry_run:
        print(json.dumps(resolved, indent=2, sort_keys=True))
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    failed_marker = out / "run.failed"
    if failed_marker.exists():
        failed_marker.unlink()
    try:
        dom = load_preset(blob["preset"])
        strategy = blob["strategy"]
        cfg = blob.get("config", {})
        if strategy in ("topopt", "porous"):
            report = _run_density_strategy(dom, strategy, cfg,
                                           blob.get("solver", {}), out)
        else:
            report = _run_graph_strategy(dom, strategy, cfg,
                                         _solver_config(blob.get("solver", {})),
                                         blob.get("seed", 0), out)
    except (ConfigError, DomainError, MeshError, volio.FormatError) as exc:
        failed_marker.write_text(f"{type(exc).__name__}: {exc}\n")
        raise
    except Exception as exc:
        failed_marker.write_text(f"{type(exc).__name__}: {exc}\n")
        raise NumericalError(str(exc)) from exc
    rep = dataclasses.asdict(report)
    rep["report_hash"] = report_hash(rep)
    (out / "report.json").write_text(
        json.dumps(rep, indent=2, sort_keys=True, default=float) + "\n")
    print(f"{report.strategy}: compliance={report.compliance:.6g} "
          f"vf={report.volume_fraction:.4f} hash={rep['report_hash'][:12]}")
    print(f"wrote {out / 'report.json'}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    dom = load_preset(args.preset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    field = (_load_design(Path(args.field), dom) if args.field
             else _solid_field(dom))
    solver_cfg = fem.SolverConfig()
    reports = []
    base, sigma, vm = analysis.evaluate_design(field, dom, solver_cfg)
    nx, ny, nz = dom.dims
    volio.save_f32(out / "vm.f32", vm.reshape((nx, ny, nz, 1), order="F"),
                   dom.spacing, dom.origin)
    base.export_paths["vm"] = "vm.f32"
    if args.deviation is not None:
        baseline_field = (_load_design(Path(args.deviation), dom)
                          if args.deviation else _solid_field(dom))
        _, base_sigma, _ = analysis.evaluate_design(baseline_field, dom,
                                                    solver_cfg)
        dev = analysis.deviation_field(base_sigma, sigma, field.rho > 0.5)
        base.deviation_stats = dev.stats()
        volio.save_f32(out / "deviation.f32",
                       dev.values.reshape((nx, ny, nz, 1), order="F"),
                       dom.spacing, dom.origin)
        base.export_paths["deviation"] = "deviation.f32"
    reports.append(base)
    for triple in args.variable_load or []:
        reports.append(analysis.variable_load(field, dom, triple, solver_cfg))
    for i, rep in enumerate(reports):
        rep.to_json(out / f"report_{i}.json")
    analysis.compare_designs(reports, out / "comparison.csv")
    print(f"wrote {out / 'comparison.csv'} ({len(reports)} rows)")
    return EXIT_OK


def cmd_rasterize(args) -> int:
    dom = load_preset(args.preset)
    graph = volio.load_edge_graph(args.graph)
    field = voxelize_graph(graph, dom, args.thickness)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    volio.save_labels(out / "design.vox", _material_labels(field),
                      dom.spacing, dom.origin)
    print(f"wrote {out / 'design.vox'} vf={field.volume_fraction():.4f}")
    return EXIT_OK


_COLORMAPS = {"vm.f32": "white_brown", "deviation.f32": "white_brown",
              "density.f32": "white_brown"}


def cmd_export_viewer(args) -> int:
    run_dir = Path(args.run)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    preset_labels = None
    fields = []
    for name in ("design.vox", "density.f32", "vm.f32", "deviation.f32"):
        src = run_dir / name
        if not src.exists():
            continue
        shutil.copy2(src, out / name)
        if name.endswith(".vox"):
            labels, spacing, origin = volio.load_labels(src)
            preset_labels = (labels.shape, spacing, origin)
            fields.append({"name": "design", "file": name, "kind": "labels"})
        else:
            values, spacing, origin = volio.load_f32(src)
            preset_labels = preset_labels or (values.shape[:3], spacing, origin)
            ncomp = 1 if values.ndim == 3 else int(values.shape[3])
            fields.append({"name": name.split(".")[0], "file": name,
                           "kind": "scalar", "ncomp": ncomp,
                           "colormap": _COLORMAPS.get(name, "white_brown"),
                           "range": [float(values.min()), float(values.max())]})
    if not fields:
        raise ConfigError(f"no exportable volumes found in {run_dir}")
    dims, spacing, origin = preset_labels
    scene = {"version": 1, "dims": list(map(int, dims)),
             "spacing": float(spacing),
             "origin": [float(v) for v in origin],
             "fields": fields,
             "iso_default": 0.5,
             "clip_default": {"axis": "x", "offset": 0.5, "enabled": False}}
    (out / "scene.json").write_text(json.dumps(scene, indent=2,
                                               sort_keys=True) + "\n")
    validate_scene(out)
    print(f"wrote {out / 'scene.json'} ({len(fields)} fields)")
    return EXIT_OK


def validate_scene(bundle_dir) -> dict:
    bundle_dir = Path(bundle_dir)
    scene = json.loads((bundle_dir / "scene.json").read_text())
    for key in ("version", "dims", "spacing", "origin", "fields",
                "iso_default", "clip_default"):
        if key not in scene:
            raise ConfigError(f"scene.json missing key {key!r}")
    if len(scene["dims"]) != 3 or min(scene["dims"]) < 1:
        raise ConfigError("scene dims must be 3 positive integers")
    for f in scene["fields"]:
        if not (bundle_dir / f["file"]).exists():
            raise ConfigError(f"scene references missing volume {f['file']!r}")
        if f["kind"] not in ("labels", "scalar"):
            raise ConfigError(f"unknown field kind {f['kind']!r}")
    return scene


def _bench_one(manifest: str, out: str) -> str:
    rc = main(["run", "--manifest", manifest, "--out", out])
    if rc != EXIT_OK:
        raise NumericalError(f"run failed for {manifest}")
    return out


def cmd_bench(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = args.jobs or _worker_threads()
    run_dirs = [str(out / Path(m).stem) for m in args.manifests]
    if jobs > 1 and len(args.manifests) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_bench_one, args.manifests, run_dirs))
    else:
        for m, d in zip(args.manifests, run_dirs):
            _bench_one(m, d)
    reports = []
    for d in run_dirs:
        blob = json.loads((Path(d) / "report.json").read_text())
        blob.pop("report_hash", None)
        blob["load_case"] = tuple(blob["load_case"])
        reports.append(analysis.DesignReport(**blob))
    analysis.compare_designs(reports, out / "comparison.csv")
    print(f"wrote {out / 'comparison.csv'} ({len(reports)} rows)")
    return EXIT_OK


# ----------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="infillbench",
                                description="stiff lightweight infill "
                                            "benchmark suite")
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("preset", help="build a simulation preset")
    pp.add_argument("--mesh", help="surface mesh (STL/OBJ)")
    pp.add_argument("--voxels", help="label volume (.vox)")
    pp.add_argument("--res", type=int, default=64,
                    help="elements along the longest axis")
    pp.add_argument("--fix", action="append", default=[],
                    help="fixation selector (box:... | sphere:...)")
    pp.add_argument("--load", action="append", default=[],
                    help="load selector + ',f=fx,fy,fz'")
    pp.add_argument("--passive", choices=("all_boundary", "loaded_and_fixed"),
                    help="mark a passive boundary shell")
    pp.add_argument("--passive-dilation", type=int, default=0)
    pp.add_argument("--name", default="preset")
    pp.add_argument("--out", default=".")
    pp.set_defaults(func=cmd_preset)

    pr = sub.add_parser("run", help="execute a strategy manifest")
    pr.add_argument("--manifest", required=True)
    pr.add_argument("--out")
    pr.add_argument("--dry-run", action="store_true")
    pr.set_defaults(func=cmd_run)

    pa = sub.add_parser("analyze", help="evaluate a design")
    pa.add_argument("--preset", required=True)
    pa.add_argument("--field", help="design volume (.vox or .f32); "
                                    "defaults to fully solid")
    pa.add_argument("--variable-load", nargs=3, type=float, action="append",
                    metavar=("TX", "TY", "TZ"),
                    help="Euler angles in degrees (repeatable)")
    pa.add_argument("--deviation", nargs="?", const="", default=None,
                    metavar="BASELINE",
                    help="deviation vs a baseline design (default: solid)")
    pa.add_argument("--out", default="analysis_out")
    pa.set_defaults(func=cmd_analyze)

    pz = sub.add_parser("rasterize", help="voxelize an edge graph")
    pz.add_argument("--preset", required=True)
    pz.add_argument("--graph", required=True)
    pz.add_argument("--thickness", type=int, default=1)
    pz.add_argument("--out", default="rasterize_out")
    pz.set_defaults(func=cmd_rasterize)

    pe = sub.add_parser("export-viewer", help="bundle volumes for the viewer")
    pe.add_argument("--run", required=True)
    pe.add_argument("--out", required=True)
    pe.set_defaults(func=cmd_export_viewer)

    pb = sub.add_parser("bench", help="fan out multiple runs")
    pb.add_argument("--manifests", nargs="+", required=True)
    pb.add_argument("--jobs", type=int)
    pb.add_argument("--out", default="bench_out")
    pb.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DomainError, MeshError, volio.FormatError,
            FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, fem.SolverError, OptimizationError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
