"""Experiment manifests.

An :class:`ExperimentManifest` fully determines a pipeline run: the
simulation scenario, windowing, CP settings, training hyperparameters,
experiment counts per activity, and the antenna sweep.  Manifests load
from JSON; unknown keys are rejected so typos fail loudly.  The
canonical-dict form (everything resolved, sorted keys, output location
excluded) is what the pipeline hashes to name its outputs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .channel import Activity, SimConfig
from .cp import AlsConfig
from .nn import TrainConfig

__all__ = [
    "DEFAULT_ANTENNA_SWEEP",
    "DEFAULT_EXPERIMENT_COUNTS",
    "ExperimentManifest",
    "canonical_dict",
    "load_manifest",
    "manifest_from_dict",
    "reseed",
]

DEFAULT_ANTENNA_SWEEP = (3, 10, 25, 50, 75, 100)

# The static class gets twice the experiments of each dynamic class.
DEFAULT_EXPERIMENT_COUNTS = {
    Activity.STATIC: 36,
    Activity.PERIODIC: 18,
    Activity.RANDOM: 18,
    Activity.ROTATE_SHIFT: 18,
    Activity.ROTATE: 18,
}

_ACTIVITY_ALIASES = {f"A{kind.value + 1}": kind for kind in Activity}


def _parse_activity(name: str) -> Activity:
    key = str(name).upper()
    if key in Activity.__members__:
        return Activity[key]
    if key in _ACTIVITY_ALIASES:
        return _ACTIVITY_ALIASES[key]
    raise ValueError(f"unknown activity {name!r}")


@dataclass(frozen=True)
class ExperimentManifest:
    sim: SimConfig
    t_w: int
    r_max: int
    als: AlsConfig
    train: TrainConfig
    experiments_per_activity: dict[Activity, int] = field(
        default_factory=lambda: dict(DEFAULT_EXPERIMENT_COUNTS)
    )
    antenna_sweep: tuple[int, ...] = DEFAULT_ANTENNA_SWEEP
    output_dir: str = "out"

    def __post_init__(self):
        if not 1 <= self.t_w <= self.sim.t:
            raise ValueError(
                f"t_w must be in [1, {self.sim.t}], got {self.t_w}"
            )
        if self.r_max < 1:
            raise ValueError(f"r_max must be >= 1, got {self.r_max}")
        if self.als.rank != self.r_max:
            raise ValueError(
                f"als.rank ({self.als.rank}) must equal r_max ({self.r_max})"
            )
        counts = self.experiments_per_activity
        for kind, count in counts.items():
            if not isinstance(kind, Activity):
                raise ValueError(f"bad activity key {kind!r}")
            if int(count) < 0:
                raise ValueError(f"negative experiment count for {kind.name}")
        if sum(counts.values()) < 1:
            raise ValueError("at least one experiment is required")
        sweep = tuple(int(m) for m in self.antenna_sweep)
        if not sweep:
            raise ValueError("antenna_sweep must not be empty")
        if any(b <= a for a, b in zip(sweep, sweep[1:])):
            raise ValueError(f"antenna_sweep must be strictly increasing: {sweep}")
        if sweep[0] < 1 or sweep[-1] > self.sim.m:
            raise ValueError(
                f"antenna_sweep values must lie in [1, {self.sim.m}]: {sweep}"
            )
        object.__setattr__(self, "antenna_sweep", sweep)
        if not str(self.output_dir):
            raise ValueError("output_dir must be non-empty")

    @property
    def windows_per_record(self) -> int:
        return self.sim.t // self.t_w

    def record_counts(self) -> list[tuple[Activity, int]]:
        """Counts in activity order, zero-count classes dropped."""
        return [
            (kind, int(self.experiments_per_activity.get(kind, 0)))
            for kind in Activity
            if int(self.experiments_per_activity.get(kind, 0)) > 0
        ]


def _take(src: dict, allowed: dict, where: str) -> dict:
    """Pick known keys with type coercion; reject anything else."""
    unknown = set(src) - set(allowed)
    if unknown:
        raise ValueError(f"unknown {where} keys: {sorted(unknown)}")
    return {k: allowed[k](v) for k, v in src.items()}


def manifest_from_dict(raw: dict) -> ExperimentManifest:
    if not isinstance(raw, dict):
        raise ValueError("manifest must be a JSON object")
    top = dict(raw)
    sim_raw = top.pop("sim", None)
    if not isinstance(sim_raw, dict):
        raise ValueError("manifest requires a 'sim' object")
    sim_kwargs = _take(
        sim_raw,
        {
            "t": int,
            "f": int,
            "m": int,
            "snapshot_interval": float,
            "carrier_hz": float,
            "scenario": str,
            "snr_db": float,
            "frame_loss_prob": float,
            "seed": int,
            "n_paths": int,
            "rician_k_db": float,
        },
        "sim",
    )
    for need in ("t", "f", "m"):
        if need not in sim_kwargs:
            raise ValueError(f"sim.{need} is required")
    sim = SimConfig(**sim_kwargs)

    r_max = int(top.pop("r_max", 100))
    als_raw = top.pop("als", {})
    als_kwargs = _take(
        als_raw,
        {"rank": int, "max_iters": int, "rel_tol": float, "seed": int},
        "als",
    )
    als_kwargs.setdefault("rank", r_max)
    als = AlsConfig(**als_kwargs)

    train_raw = top.pop("train", {})
    train_kwargs = _take(
        train_raw,
        {
            "learning_rate": float,
            "beta1": float,
            "beta2": float,
            "eps": float,
            "epochs": int,
            "batch_size": int,
            "split_fraction": float,
            "seed": int,
        },
        "train",
    )
    train = TrainConfig(**train_kwargs)

    counts_raw = top.pop("experiments_per_activity", None)
    if counts_raw is None:
        counts = dict(DEFAULT_EXPERIMENT_COUNTS)
    else:
        counts = {
            _parse_activity(k): int(v) for k, v in dict(counts_raw).items()
        }

    kwargs = {
        "sim": sim,
        "t_w": int(top.pop("t_w", 200)),
        "r_max": r_max,
        "als": als,
        "train": train,
        "experiments_per_activity": counts,
    }
    if "antenna_sweep" in top:
        kwargs["antenna_sweep"] = tuple(int(m) for m in top.pop("antenna_sweep"))
    if "output_dir" in top:
        kwargs["output_dir"] = str(top.pop("output_dir"))
    if top:
        raise ValueError(f"unknown manifest keys: {sorted(top)}")
    return ExperimentManifest(**kwargs)


def load_manifest(path) -> ExperimentManifest:
    """Parse a JSON manifest; any problem is a validation error."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValueError(f"{path}: cannot read manifest ({exc})") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from exc
    return manifest_from_dict(raw)


def canonical_dict(manifest: ExperimentManifest) -> dict:
    """Fully resolved manifest as plain JSON types, minus the output
    location (outputs are addressed by computation, not destination)."""
    return {
        "sim": dataclasses.asdict(manifest.sim),
        "t_w": manifest.t_w,
        "r_max": manifest.r_max,
        "als": dataclasses.asdict(manifest.als),
        "train": dataclasses.asdict(manifest.train),
        "experiments_per_activity": {
            kind.name: int(manifest.experiments_per_activity.get(kind, 0))
            for kind in Activity
        },
        "antenna_sweep": list(manifest.antenna_sweep),
    }


def reseed(manifest: ExperimentManifest, seed: int) -> ExperimentManifest:
    """Apply a global seed override to simulation, CP, and training."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return dataclasses.replace(
        manifest,
        sim=dataclasses.replace(manifest.sim, seed=seed),
        als=dataclasses.replace(manifest.als, seed=seed),
        train=dataclasses.replace(manifest.train, seed=seed),
    )
