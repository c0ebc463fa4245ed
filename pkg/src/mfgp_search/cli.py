"""Command-line entry point: run missions, benchmark studies, validate configs.

Config files are flat ``section.key=value`` text (one pair per line, ``#``
comments).  A manifest.json from a previous run can be passed as --config to
reproduce that run's outputs byte-for-byte.
"""

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from ._linalg import NumericalError
from .classifier import occupancy_pgm, occupancy_rows
from .field_model import Bump, FidelityModel, GridDomain, field_to_grid
from .formats import dump_json, fmt, write_csv, write_grid_csv, write_pgm
from .inference import diagnostics_lines
from .mission import (
    MissionConfig,
    compare_decay,
    detection_time_study,
    run_mission,
)

MANIFEST_SCHEMA_VERSION = 1


class ConfigError(Exception):
    pass


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat key=value lines; raises ConfigError with the line number."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _get(kv: dict, key: str, cast, default=None):
    if key not in kv:
        if default is not None:
            return default
        raise ConfigError(f"missing required config key {key!r}")
    try:
        return cast(kv[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


def _as_float(v) -> float:
    return float(v)


def _as_int(v) -> int:
    f = float(v)
    if f != int(f):
        raise ValueError(f"expected an integer, got {v!r}")
    return int(f)


def resolve_config(kv: dict) -> tuple[MissionConfig, dict]:
    """Build a MissionConfig (and bench settings) from flat key-values."""
    kv = {str(k): str(v) for k, v in kv.items()}
    domain = GridDomain(
        x_min=_get(kv, "domain.x_min", _as_float),
        x_max=_get(kv, "domain.x_max", _as_float),
        y_min=_get(kv, "domain.y_min", _as_float),
        y_max=_get(kv, "domain.y_max", _as_float),
        resolution=_get(kv, "domain.resolution", _as_int),
    )
    levels = _get(kv, "model.levels", _as_int)
    if levels < 1:
        raise ConfigError("config key 'model.levels': must be >= 1")
    per_level = {}
    for name in ("mu", "v", "l", "s", "z"):
        per_level[name] = tuple(
            _get(kv, f"model.{name}_{m}", _as_float) for m in range(1, levels + 1)
        )
    try:
        model = FidelityModel(**per_level)
    except ValueError as exc:
        raise ConfigError(f"model block: {exc}") from exc

    n_bumps = _get(kv, "planted.bumps", _as_int, default=0)
    bumps = tuple(
        Bump(
            x=_get(kv, f"planted.bump_{k}.x", _as_float),
            y=_get(kv, f"planted.bump_{k}.y", _as_float),
            amplitude=_get(kv, f"planted.bump_{k}.amplitude", _as_float),
            radius=_get(kv, f"planted.bump_{k}.radius", _as_float),
        )
        for k in range(1, n_bumps + 1)
    )
    start = None
    if any(f"mission.start_{ax}" in kv for ax in "xyz"):
        start = tuple(_get(kv, f"mission.start_{ax}", _as_float) for ax in "xyz")
    try:
        config = MissionConfig(
            domain=domain,
            model=model,
            delta=_get(kv, "mission.delta", _as_float),
            th=_get(kv, "mission.th", _as_float),
            seed=_get(kv, "mission.seed", _as_int, default=0),
            mode=_get(kv, "mission.mode", str, default="prior-draw"),
            baseline=_get(kv, "mission.baseline", str, default="multi-fidelity"),
            epoch_sample_cap=_get(kv, "mission.epoch_sample_cap", _as_int, default=200),
            max_epochs=_get(kv, "mission.max_epochs", _as_int, default=30),
            sigma_ratio=_get(kv, "mission.sigma_ratio", _as_float, default=0.75),
            sample_time=_get(kv, "mission.sample_time", _as_float, default=1.0),
            termination_fraction=_get(
                kv, "mission.termination_fraction", _as_float, default=0.99
            ),
            bumps=bumps,
            background=_get(kv, "planted.background", _as_float, default=0.0),
            start=start,
        )
    except ValueError as exc:
        raise ConfigError(f"mission block: {exc}") from exc
    bench = {
        "samples": _get(kv, "bench.samples", _as_int, default=80),
        "seeds": _get(kv, "bench.seeds", _as_int, default=30),
        "delta_bins": _get(kv, "bench.delta_bins", _as_int, default=3),
    }
    return config, bench


def load_config(path: Path) -> dict[str, str]:
    """Read a flat config file, or the resolved block of a manifest.json."""
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix == ".json":
        try:
            manifest = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
        if "resolved" not in manifest:
            raise ConfigError(f"{path}: manifest has no 'resolved' config block")
        return {str(k): str(v) for k, v in manifest["resolved"].items()}
    return parse_config_text(text)


def apply_overrides(kv: dict[str, str], sets: list[str], seed: int | None) -> dict[str, str]:
    out = dict(kv)
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        out[key.strip()] = value.strip()
    if seed is not None:
        out["mission.seed"] = str(seed)
    return out


def write_manifest(
    out_dir: Path,
    config_path: Path,
    config: MissionConfig,
    overrides: list[str],
    bench: dict,
):
    resolved = config.to_flat_dict()
    resolved.update({f"bench.{k}": v for k, v in bench.items()})
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "tool": {"name": "mfgp-search", "version": __version__},
        "config_path": str(config_path),
        "out_dir": str(out_dir),
        "seed": config.seed,
        "overrides": list(overrides),
        "resolved": resolved,
    }
    (out_dir / "manifest.json").write_text(dump_json(manifest))


def _write_run_outputs(out_dir: Path, report, config: MissionConfig):
    (out_dir / "report.json").write_text(dump_json(report.to_json_dict()))
    write_csv(
        out_dir / "occupancy.csv",
        ["x", "y", "label", "epoch", "time"],
        occupancy_rows(report.final_map),
    )
    write_pgm(out_dir / "occupancy.pgm", occupancy_pgm(report.final_map), lo=0, hi=255)
    write_grid_csv(out_dir / "mean.csv", config.domain, report.posterior_mu)
    write_grid_csv(out_dir / "variance.csv", config.domain, report.posterior_sigma2)
    write_csv(
        out_dir / "plans.csv",
        ["epoch", "order", "x", "y", "fidelity", "sigma_before"],
        report.plan_rows,
    )
    write_csv(
        out_dir / "tours.csv",
        ["epoch", "order", "x", "y", "z", "time"],
        report.tour_rows,
    )
    write_csv(out_dir / "decay.csv", ["n", "max_var"], report.decay)
    lines = diagnostics_lines(report.log, config.model)
    (out_dir / "samples.log").write_text("\n".join(lines) + "\n" if lines else "")
    for m in range(1, config.model.levels + 1):
        write_grid_csv(out_dir / f"truth_f{m}.csv", config.domain, report.truth.level_field(m))
        write_pgm(
            out_dir / f"truth_f{m}.pgm",
            field_to_grid(config.domain, report.truth.level_field(m)),
        )


def cmd_run(args) -> int:
    config_path = Path(args.config)
    kv = apply_overrides(load_config(config_path), args.set or [], args.seed)
    config, bench = resolve_config(kv)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(out_dir, config_path, config, args.set or [], bench)
    report = run_mission(config)
    _write_run_outputs(out_dir, report, config)
    done = report.terminated == "classified"
    print(
        f"mission {'done' if done else 'stopped at epoch cap'}: "
        f"{report.classified_fraction * 100:.1f}% classified, "
        f"n={report.n_total}, clock={report.clock_total:.1f}"
    )
    return 0 if done else 2


def cmd_bench(args) -> int:
    config_path = Path(args.config)
    kv = apply_overrides(load_config(config_path), args.set or [], args.seed)
    config, bench = resolve_config(kv)
    if config.model.levels < 2:
        print("bench requires model.levels >= 2 to compare samplers", file=sys.stderr)
        return 1
    if bench["seeds"] < 2:
        print("warning: detection-time study with a single seed is noisy", file=sys.stderr)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(out_dir, config_path, config, args.set or [], bench)
    curves = compare_decay(config, n_samples=bench["samples"])
    write_csv(
        out_dir / "decay.csv",
        ["n", "multi_fidelity_max_var", "single_fidelity_max_var"],
        zip(curves.n, curves.multi_fidelity, curves.single_fidelity),
    )
    seeds = range(config.seed, config.seed + bench["seeds"])
    table = detection_time_study(config, seeds, delta_bins=bench["delta_bins"])
    write_csv(
        out_dir / "detection_time.csv",
        ["bin", "delta_min", "delta_max", "mean_time", "classified", "censored"],
        (
            (r["bin"], r["delta_min"], r["delta_max"], r["mean_time"], r["classified"], r["censored"])
            for r in table.rows
        ),
    )
    print(f"bench complete: decay.csv, detection_time.csv in {out_dir}")
    return 0


def cmd_validate(args) -> int:
    config_path = Path(args.config)
    kv = apply_overrides(load_config(config_path), args.set or [], args.seed)
    config, _bench = resolve_config(kv)
    for key, value in sorted(config.to_flat_dict().items()):
        print(f"{key}={value if isinstance(value, str) else fmt(value)}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mfgp-search",
        description="Multi-fidelity GP target search: run missions, benchmark, validate configs.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_text in (
        ("run", cmd_run, "run one mission and write its artifacts"),
        ("bench", cmd_bench, "uncertainty-decay comparison and detection-time study"),
        ("validate", cmd_validate, "check a config and echo its normalized form"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="config file (or manifest.json)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override mission.seed")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override a config key (repeatable)",
        )
        p.set_defaults(func=fn)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, NumericalError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
