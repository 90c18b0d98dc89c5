"""Config-driven experiment runs: flat INI configs, strict key validation,
digest-stable artifact directories.

Config layout (all keys validated against the experiment registry; unknown
keys are errors, silent defaults are not a thing):

    [experiment]
    name = rho-irregularity

    [params]
    master_seed = 1234
    n_steps = 4096

    [output]
    dir = ./runs

Only the output root may be overridden from the environment
(FBMLAB_OUTPUT_ROOT); everything else lives in the file.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

from .experiments import EXPERIMENTS, list_experiments, run_experiment_body

OUTPUT_ROOT_ENV = "FBMLAB_OUTPUT_ROOT"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str
    params: dict
    output_dir: Path
    master_seed: int

    def echo(self) -> dict:
        return {
            "experiment": self.name,
            "params": {k: self.params[k] for k in sorted(self.params)},
        }


def _parse_value(raw: str, typ):
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    if typ is list:
        return [float(v) for v in raw.replace(",", " ").split()]
    return raw


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    cp.read(path)
    for section in cp.sections():
        if section not in ("experiment", "params", "output"):
            raise ConfigError(f"unknown config section [{section}]")
    if not cp.has_option("experiment", "name"):
        raise ConfigError("missing [experiment] name")
    name = cp.get("experiment", "name")
    for key in cp.options("experiment"):
        if key != "name":
            raise ConfigError(f"unknown key {key!r} in [experiment]")
    if name not in EXPERIMENTS:
        raise ConfigError(
            f"unknown experiment {name!r}; known: {sorted(EXPERIMENTS)}"
        )
    schema = EXPERIMENTS[name]["params"]
    params = {}
    raw = dict(cp.items("params")) if cp.has_section("params") else {}
    if "master_seed" not in raw:
        raise ConfigError("master_seed is mandatory in [params]")
    seed = int(raw.pop("master_seed"))
    for key, val in raw.items():
        if key not in schema:
            raise ConfigError(
                f"unknown parameter {key!r} for experiment {name!r}; "
                f"allowed: {sorted(schema) + ['master_seed']}"
            )
        params[key] = _parse_value(val, schema[key][0])
    for key, (typ, default) in schema.items():
        params.setdefault(key, default)
    params["master_seed"] = seed
    out_raw = cp.get("output", "dir", fallback="./runs")
    for key in (cp.options("output") if cp.has_section("output") else []):
        if key != "dir":
            raise ConfigError(f"unknown key {key!r} in [output]")
    root = os.environ.get(OUTPUT_ROOT_ENV, out_raw)
    return ExperimentConfig(name, params, Path(root), seed)


def validate_config(cfg: ExperimentConfig):
    """Regime and precondition checks before consuming any budget."""
    from .fields import classify_regime

    p = cfg.params
    name = cfg.name
    if name in ("conditional-regularity", "mollified-cauchy"):
        rep = classify_regime(p["hurst"], p["q"], p["alpha"])
        if name == "conditional-regularity" and not (rep.condition_a or rep.condition_b):
            raise ConfigError(
                f"regime violation: alpha={p['alpha']} <= 1 - 1/(q'H) = "
                f"{rep.threshold:.4f} (need alpha above threshold)"
            )
        if name == "mollified-cauchy" and not rep.condition_a:
            raise ConfigError(
                f"regime violation: condition A fails at H={p['hurst']}, "
                f"q={p['q']}, alpha={p['alpha']} (threshold {rep.threshold:.4f})"
            )
    if name == "stability-rate":
        classify_regime(p["hurst"], 2.0, 1.0)  # rejects integer H
    if name == "counterexample-branching":
        qp = p["q_tilde"] / (p["q_tilde"] - 1.0)
        thr = 1.0 - 1.0 / (p["hurst"] * qp)
        if not p["alpha"] < thr:
            raise ConfigError(
                f"regime violation: counterexample needs alpha < 1 - 1/(H q~') "
                f"= {thr:.4f}, got alpha={p['alpha']}"
            )
    if name == "rho-irregularity" and max(p["hurst_list"]) >= 1.0:
        raise ConfigError("rho-irregularity experiment expects H in (0,1)")


@dataclass
class RunSummary:
    config: dict
    files: dict
    headline: dict
    digest: str
    wall_time: float
    run_dir: Path

    def to_json(self) -> str:
        return json.dumps({
            "config": self.config,
            "manifest": self.files,
            "headline": self.headline,
            "digest": self.digest,
            "wall_time_s": self.wall_time,
        }, indent=2, sort_keys=True)


def _digest(files: dict) -> str:
    h = hashlib.sha256()
    for name in sorted(files):
        h.update(name.encode())
        h.update(files[name].encode())
    return h.hexdigest()


def run_experiment(cfg: ExperimentConfig) -> RunSummary:
    """Execute one experiment: validate, run, write artifacts, digest.

    The run directory is named by the digest prefix, so re-running the same
    config lands in the same directory with byte-identical artifacts.
    """
    validate_config(cfg)
    start = time.monotonic()
    artifacts, headline = run_experiment_body(cfg.name, cfg.params)
    wall = time.monotonic() - start
    hashes = {fname: hashlib.sha256(data.encode()).hexdigest()
              for fname, data in artifacts.items()}
    digest = _digest(hashes)
    run_dir = cfg.output_dir / f"{cfg.name}-{digest[:12]}"
    run_dir.mkdir(parents=True, exist_ok=True)
    for fname, data in artifacts.items():
        (run_dir / fname).write_text(data)
    summary = RunSummary(cfg.echo(), hashes, _jsonable(headline), digest, wall, run_dir)
    (run_dir / "summary.json").write_text(summary.to_json())
    return summary


def _jsonable(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def write_schema_file(path: str | Path):
    """Emit the machine-readable schema of all config keys."""
    schema = {
        "sections": {
            "experiment": {"name": "one of the registered experiment names"},
            "params": "experiment parameters; master_seed is mandatory",
            "output": {"dir": "output root (env FBMLAB_OUTPUT_ROOT overrides)"},
        },
        "experiments": list_experiments(),
    }
    Path(path).write_text(json.dumps(schema, indent=2, sort_keys=True))
