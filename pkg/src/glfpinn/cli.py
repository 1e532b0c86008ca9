"""Command line harness: ``run``, ``sweep``, ``sampler-demo`` and ``reference``.

Exit status is the only failure channel: 0 on success, 1 on a configuration
error, 2 when any seed of a run diverged.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import ContractError
from .config import ConfigError, RunConfig, load_config, parse_json
from .pde import PROBLEM_NAMES, SPATIAL, DomainBox, get_problem
from .reference import UnsupportedReference, reference_for, write_reference
from .sampler import CollocationSet, GlfConfig, build_pmf, generate_candidates, resample
from .trainer import THREADS_ENV, run, thread_count

log = logging.getLogger("glfpinn")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
    out = args.out or cfg.output_dir or f"runs/{cfg.problem}_{cfg.sampler.name}"
    record = run(cfg, out, args.threads)
    final = record["final"]
    print(f"{cfg.problem}/{cfg.sampler.name}: l2 mean {final['l2_mean']} std {final['l2_std']} -> {out}")
    return EXIT_DIVERGED if final["n_diverged"] else EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentManifest:
    configs: tuple[RunConfig, ...]
    output_root: str
    parallelism: int = 1

    @staticmethod
    def run_id(cfg: RunConfig) -> str:
        return f"{cfg.problem}_{cfg.sampler.name}_seed{cfg.seeds[0]}"


MANIFEST_KEYS = {"version", "problems", "samplers", "seeds", "base", "output_root", "parallelism"}


def parse_manifest(data: dict, source: str = "<manifest>") -> ExperimentManifest:
    """Cartesian product problems x samplers x seeds over a shared ``base`` config."""
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: expected an object")
    unknown = sorted(set(data) - MANIFEST_KEYS)
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {', '.join(unknown)}")
    if data.get("version", 1) != 1:
        raise ConfigError(f"{source}: unsupported manifest version {data['version']}")
    for key in ("problems", "samplers"):
        if not isinstance(data.get(key), list) or not data[key]:
            raise ConfigError(f"{source}: '{key}' must be a non-empty list")
    base = dict(data.get("base", {}))
    for key in ("problem", "seeds"):
        if key in base:
            raise ConfigError(f"{source}: base must not set '{key}'")
    seeds = data.get("seeds", [0, 1, 2, 3, 4])
    configs = []
    for problem in data["problems"]:
        for sampler in data["samplers"]:
            for seed in seeds:
                entry = dict(base, problem=problem, seeds=[seed], sampler={**base.get("sampler", {}), "name": sampler})
                configs.append(RunConfig.from_dict(entry))
    ids = [ExperimentManifest.run_id(c) for c in configs]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"{source}: run identifiers are not unique")
    parallelism = data.get("parallelism", 1)
    if not isinstance(parallelism, int) or parallelism < 1:
        raise ConfigError(f"{source}: parallelism must be a positive integer")
    return ExperimentManifest(tuple(configs), str(data.get("output_root", "sweep")), parallelism)


def load_manifest(path) -> ExperimentManifest:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_manifest(parse_json(text, str(path)), str(path))


def _sweep_child(cfg_dict: dict, out: str, threads: int) -> dict:
    cfg = RunConfig.from_dict(cfg_dict)
    try:
        record = run(cfg, out, threads)
    except Exception as exc:  # a broken child must not stop the sweep
        return {"status": "error", "message": f"{type(exc).__name__}: {exc}", "final_l2_error": None, "extra_residual_evals": 0}
    seed = record["seeds"][0]
    return {k: seed[k] for k in ("status", "message", "final_l2_error", "extra_residual_evals")}


def summarize(rows: list[dict]) -> list[dict]:
    """One row per (problem, sampler): mean and population std of the final L2 error."""
    groups: dict[tuple[str, str], list[dict]] = {}
    for r in rows:
        groups.setdefault((r["problem"], r["sampler"]), []).append(r)
    out = []
    for (problem, sampler), rs in groups.items():
        errs = np.array([r["final_l2_error"] for r in rs if r["status"] == "ok" and r["final_l2_error"] is not None])
        extra = [int(r["extra_residual_evals"]) for r in rs]
        out.append({
            "problem": problem,
            "sampler": sampler,
            "n_seeds": len(rs),
            "n_ok": int(errs.size),
            "n_failed": len(rs) - int(errs.size),
            "l2_mean": float(errs.mean()) if errs.size else float("nan"),
            "l2_std": float(errs.std()) if errs.size else float("nan"),
            "extra_residual_evals": max(extra),
            "extra_residual_evals_total": sum(extra),
        })
    return out


def _write_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def run_sweep(manifest: ExperimentManifest, threads: int | None = None) -> list[dict]:
    root = Path(manifest.output_root)
    root.mkdir(parents=True, exist_ok=True)
    per_child = max(1, thread_count(threads) // manifest.parallelism)
    jobs = [(c.to_dict(), str(root / ExperimentManifest.run_id(c)), per_child) for c in manifest.configs]
    if manifest.parallelism == 1:
        results = [_sweep_child(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=manifest.parallelism) as pool:
            results = list(pool.map(_sweep_child, *zip(*jobs)))
    rows = []
    for cfg, res in zip(manifest.configs, results):
        rows.append({"run_id": ExperimentManifest.run_id(cfg), "problem": cfg.problem, "sampler": cfg.sampler.name,
                     "seed": cfg.seeds[0], **res})
    _write_csv(root / "runs.csv", rows)
    summary = summarize(rows)
    _write_csv(root / "summary.csv", summary)
    return summary


def cmd_sweep(args) -> int:
    manifest = load_manifest(args.config)
    if args.out:
        manifest = dataclasses.replace(manifest, output_root=args.out)
    summary = run_sweep(manifest, args.threads)
    for row in summary:
        print(f"{row['problem']:24s} {row['sampler']:8s} {row['l2_mean']:.3e} +- {row['l2_std']:.3e}  extra {row['extra_residual_evals']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sampler-demo
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DemoConfig:
    """Synthetic residual field on [0, 1] driving the GLF pipeline stages."""

    field: str = "spike"
    n_anchors: int = 500
    rounds: int = 1
    seed: int = 0
    level: float = 1.0  # value of the constant field
    center: float = 0.5
    scale: float = 0.005  # spike is exp(-(x - center)^2 / scale)
    sampler: GlfConfig = GlfConfig()

    def residual(self, x: np.ndarray) -> np.ndarray:
        if self.field == "constant":
            return np.full(len(x), self.level)
        return np.exp(-((x[:, 0] - self.center) ** 2) / self.scale)


DEMO_FIELDS = ("spike", "constant")


def parse_demo_config(data: dict, source: str = "<demo>") -> DemoConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: expected an object")
    fields = {f.name for f in dataclasses.fields(DemoConfig)}
    unknown = sorted(set(data) - fields)
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {', '.join(unknown)}")
    kwargs = dict(data)
    if "sampler" in kwargs:
        smp = kwargs["sampler"]
        glf_fields = {f.name for f in dataclasses.fields(GlfConfig)}
        if not isinstance(smp, dict) or set(smp) - glf_fields:
            raise ConfigError(f"{source}.sampler: unknown key(s) {', '.join(sorted(set(smp) - glf_fields))}")
        try:
            kwargs["sampler"] = GlfConfig(**smp)
        except ContractError as exc:
            raise ConfigError(f"{source}.sampler: {exc}") from None
    cfg = DemoConfig(**kwargs)
    if cfg.field not in DEMO_FIELDS:
        raise ConfigError(f"{source}: field must be one of {', '.join(DEMO_FIELDS)}")
    if cfg.n_anchors < 1 or cfg.rounds < 1:
        raise ConfigError(f"{source}: n_anchors and rounds must be positive")
    return cfg


def sampler_demo(cfg: DemoConfig, out_dir) -> list[Path]:
    """Write the four GLF stages per round as CSV.

    ``stage1_anchors`` (x, residual), ``stage2_candidates`` (x, anchor_index),
    ``stage3_inherited`` (x, inherited_residual), ``stage4_resampled`` (x).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    domain = DomainBox((0.0,), (1.0,), (SPATIAL,))
    rng = np.random.default_rng(cfg.seed)
    points = domain.uniform(cfg.n_anchors, rng)
    written = []

    def save(name, cols, header):
        path = out / name
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="", fmt="%.17g")
        written.append(path)

    for rnd in range(1, cfg.rounds + 1):
        anchors = CollocationSet(points, cfg.residual(points))
        pool = generate_candidates(anchors, cfg.sampler, domain, rng)
        pmf = build_pmf(pool.inherited_residual, cfg.sampler.k, cfg.sampler.c)
        new = resample(pool, pmf, len(anchors), rng, cfg.sampler.replacement)
        save(f"round_{rnd}_stage1_anchors.csv", [anchors.points[:, 0], anchors.residuals], "x,residual")
        save(f"round_{rnd}_stage2_candidates.csv", [pool.candidates[:, 0], pool.anchor_index], "x,anchor_index")
        save(f"round_{rnd}_stage3_inherited.csv", [pool.candidates[:, 0], pool.inherited_residual], "x,inherited_residual")
        save(f"round_{rnd}_stage4_resampled.csv", [new.points[:, 0]], "x")
        points = new.points
    return written


def cmd_sampler_demo(args) -> int:
    if args.config:
        path = Path(args.config)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        cfg = parse_demo_config(parse_json(text, str(path)), str(path))
    else:
        cfg = DemoConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    files = sampler_demo(cfg, args.out or "sampler_demo")
    print(f"wrote {len(files)} files to {files[0].parent}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# reference
# ---------------------------------------------------------------------------


def cmd_reference(args) -> int:
    if args.problem not in PROBLEM_NAMES:
        raise ConfigError(f"unknown problem {args.problem!r}")
    problem = get_problem(args.problem)
    try:
        ref = reference_for(problem)
    except UnsupportedReference as exc:
        raise ConfigError(str(exc)) from None
    path = write_reference(ref, problem, args.out or "references")
    print(f"{problem.name}: {ref.provenance} (accuracy {ref.accuracy:.2e}) -> {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors; exit status 2 is reserved for divergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="glfpinn", description="Residual-adaptive PINN experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-round progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON configuration file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help=f"worker processes (default ${THREADS_ENV} or all cores)")

    p = sub.add_parser("run", help="train one configuration")
    common(p)
    p.add_argument("--seed", type=int, help="run only this seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a manifest of problems x samplers x seeds")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sampler-demo", help="dump the GLF pipeline stages on a synthetic 1-D field")
    common(p, config_required=False)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sampler_demo)

    p = sub.add_parser("reference", help="precompute a reference field")
    p.add_argument("--problem", required=True, choices=PROBLEM_NAMES)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_reference)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
