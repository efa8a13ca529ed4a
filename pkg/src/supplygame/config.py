"""Plain-text configuration files (INI sections) for scenarios, cohorts,
and pipeline manifests."""
from __future__ import annotations

import configparser
import glob
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from .agents import PLAYER_TYPES
from .flowsim import (
    CONDITIONS,
    DEFAULT_BASE_STOCK,
    ROLES,
    DisruptionEvent,
    ScenarioConfig,
)


class ConfigError(Exception):
    pass


def _parser(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"bad config: {e}") from e
    return cp


def parse_scenario(text: str) -> ScenarioConfig:
    """Read a ScenarioConfig from INI text.

    Sections: [scenario] scalars, [base_stock] per-agent levels, and one
    [disruption.<name>] section per capacity-cut event. Unspecified values
    keep the engine defaults.
    """
    cp = _parser(text)
    cfg = ScenarioConfig()
    if cp.has_section("scenario"):
        s = cp["scenario"]
        cfg.horizon = s.getint("horizon", cfg.horizon)
        cfg.start_week = s.getint("start_week", cfg.start_week)
        cfg.warmup_weeks = s.getint("warmup_weeks", cfg.warmup_weeks)
        cfg.hc_consumption = s.getint("hc_consumption", cfg.hc_consumption)
        cfg.manufacturer_capacity = s.getint("manufacturer_capacity", cfg.manufacturer_capacity)
        cfg.announcement_week = s.getint("announcement_week", cfg.announcement_week)
        cfg.condition = s.get("condition", cfg.condition)
        cfg.trust_smoothing = s.getfloat("trust_smoothing", cfg.trust_smoothing)
        cfg.rng_seed = s.getint("rng_seed", cfg.rng_seed)
    if cp.has_section("base_stock"):
        stocks = dict(DEFAULT_BASE_STOCK)
        for agent, val in cp["base_stock"].items():
            name = agent.upper()
            if name not in ROLES:
                raise ConfigError(f"unknown agent in base_stock: {agent!r}")
            stocks[name] = int(val)
        cfg.base_stock = stocks
    disruptions: List[DisruptionEvent] = []
    for section in cp.sections():
        if not section.startswith("disruption"):
            continue
        d = cp[section]
        disruptions.append(
            DisruptionEvent(
                target=d.get("target", "MN1"),
                start_week=d.getint("start_week"),
                end_week=d.getint("end_week"),
                capacity_multiplier=d.getfloat("capacity_multiplier", 0.05),
            )
        )
    if disruptions or cp.getboolean("scenario", "no_disruption", fallback=False):
        cfg.disruptions = disruptions
    cfg.validate()
    return cfg


def load_scenario(path) -> ScenarioConfig:
    return parse_scenario(Path(path).read_text())


@dataclass
class CohortSpec:
    """Synthetic cohort composition: players per type per condition."""

    counts: Dict[str, Dict[str, int]]  # type -> condition -> count
    master_seed: int = 0

    def total(self) -> int:
        return sum(sum(by_cond.values()) for by_cond in self.counts.values())


DEFAULT_COHORT = {
    "hoarder": {"NoInfo": 25, "Info": 25},
    "reactor": {"NoInfo": 25, "Info": 25},
    "follower": {"NoInfo": 10, "Info": 10},
}


def parse_cohort(text: str) -> CohortSpec:
    """[cohort] section with `<type>_<condition> = count` entries, for example
    `hoarder_noinfo = 25`. Missing entries default to 0; an absent section
    yields the default 120-player cohort."""
    cp = _parser(text)
    seed = 0
    if cp.has_section("cohort"):
        counts: Dict[str, Dict[str, int]] = {t: {c: 0 for c in CONDITIONS} for t in PLAYER_TYPES}
        seed = cp["cohort"].getint("master_seed", 0)
        for key, val in cp["cohort"].items():
            if key == "master_seed":
                continue
            try:
                t, c = key.rsplit("_", 1)
            except ValueError:
                raise ConfigError(f"bad cohort key: {key!r}")
            cond = {"noinfo": "NoInfo", "info": "Info"}.get(c.lower())
            if t not in PLAYER_TYPES or cond is None:
                raise ConfigError(f"bad cohort key: {key!r}")
            counts[t][cond] = int(val)
    else:
        counts = {t: dict(c) for t, c in DEFAULT_COHORT.items()}
    return CohortSpec(counts=counts, master_seed=seed)


def load_cohort(path) -> CohortSpec:
    return parse_cohort(Path(path).read_text())


@dataclass
class PipelineManifest:
    """Everything a pipeline run needs, so runs are reproducible from a file."""

    episode_paths: List[str]
    output_dir: str
    seed: int = 0
    filter_outliers: bool = True
    state_clusters: int = 3
    state_linkage: str = "Ward"
    hmm_k_min: int = 2
    hmm_k_max: int = 8
    hmm_restarts: int = 5
    player_clusters: int = 3
    announcement_week: int = 28

    def validate(self) -> None:
        if not self.episode_paths:
            raise ConfigError("manifest lists no episodes")
        missing = [p for p in self.episode_paths if not Path(p).exists()]
        if missing:
            raise ConfigError(f"missing episode files: {missing[:3]}")
        if self.hmm_k_min < 1 or self.hmm_k_max < self.hmm_k_min:
            raise ConfigError("bad HMM sweep range")


def parse_manifest(text: str, base_dir: Optional[Path] = None) -> PipelineManifest:
    cp = _parser(text)
    if not cp.has_section("pipeline"):
        raise ConfigError("manifest needs a [pipeline] section")
    p = cp["pipeline"]
    base = base_dir or Path(".")
    episodes: List[str] = []
    raw = p.get("episodes", "")
    for pattern in raw.split():
        full = pattern if Path(pattern).is_absolute() else str(base / pattern)
        matches = sorted(glob.glob(full))
        episodes.extend(matches if matches else [full])
    return PipelineManifest(
        episode_paths=episodes,
        output_dir=p.get("output_dir", "pipeline-out"),
        seed=p.getint("seed", 0),
        filter_outliers=p.getboolean("filter_outliers", True),
        state_clusters=p.getint("state_clusters", 3),
        state_linkage=p.get("state_linkage", "Ward"),
        hmm_k_min=p.getint("hmm_k_min", 2),
        hmm_k_max=p.getint("hmm_k_max", 8),
        hmm_restarts=p.getint("hmm_restarts", 5),
        player_clusters=p.getint("player_clusters", 3),
        announcement_week=p.getint("announcement_week", 28),
    )


def load_manifest(path) -> PipelineManifest:
    path = Path(path)
    return parse_manifest(path.read_text(), base_dir=path.parent)
