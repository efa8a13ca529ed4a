"""Synthetic cohort generation and the three-stage analysis pipeline.

Pipeline order: outlier filtering, state matrix, PCA, state clustering,
phase derivation, deviation sequences, BIC sweep, HMM fit and labeling,
Viterbi decoding, player typing, interaction report. Every stage writes its
artifact before the next starts, so a failed run keeps its partial outputs.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import hmm as hmm_mod
from . import numkit, seqtype, telemetry
from .agents import make_policy
from .config import CohortSpec, PipelineManifest
from .flowsim import BehavioralController, EpisodeRecord, ScenarioConfig, run_standalone


class PipelineError(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"pipeline stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _player_specs(
    scenario: ScenarioConfig, cohort: CohortSpec
) -> List[Tuple[str, str, int, str]]:
    specs = []
    idx = 0
    for ptype in sorted(cohort.counts):
        for cond in sorted(cohort.counts[ptype]):
            for _ in range(cohort.counts[ptype][cond]):
                seed = cohort.master_seed * 1_000_003 + idx
                specs.append((ptype, cond, seed, f"P{idx:04d}"))
                idx += 1
    return specs


def _run_player(args: Tuple[ScenarioConfig, str, str, int, str]) -> EpisodeRecord:
    scenario, ptype, cond, seed, player_id = args
    cfg = replace(scenario, condition=cond, rng_seed=seed)
    policy = make_policy(
        ptype, seed=seed,
        base_stock=cfg.base_stock["WS1"],
        reaction_week=cfg.announcement_week,
    )
    return run_standalone(
        cfg,
        controllers={"WS1": BehavioralController(policy)},
        player_id=player_id,
        truth=ptype,
    )


def generate_cohort(
    scenario: ScenarioConfig,
    cohort: CohortSpec,
    out_dir: Optional[Path] = None,
    jobs: int = 1,
) -> List[EpisodeRecord]:
    """Run one standalone episode per synthetic player.

    Player seeds are derived from the cohort master seed by fixed offsets, so
    the cohort is reproducible and episodes are independent; `jobs` > 1 fans
    the runs out over processes without changing the output order.
    """
    tasks = [(scenario, *spec) for spec in _player_specs(scenario, cohort)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            episodes = list(pool.map(_run_player, tasks))
    else:
        episodes = [_run_player(t) for t in tasks]
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for ep in episodes:
            telemetry.write_episode(ep, out_dir / f"{ep.player_id}.episode")
    return episodes


@dataclass
class PipelineResult:
    output_dir: Path
    kept: List[EpisodeRecord]
    removed: List[EpisodeRecord]
    state_matrix: telemetry.StateMatrix
    pca: numkit.PcaResult
    state_labels: np.ndarray  # (players, weeks) cluster ids
    segmentation: seqtype.PhaseSegmentation
    deviations: telemetry.DeviationSequences
    bic: hmm_mod.BicSweepResult
    model: hmm_mod.HmmModel
    mode_labels: Dict[int, str]
    sequences: List[seqtype.ModeSequence]
    typing: seqtype.PlayerTyping
    report: seqtype.InteractionReport
    type_accuracy: Optional[float]


def run_pipeline(manifest: PipelineManifest) -> PipelineResult:
    manifest.validate()
    out = Path(manifest.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = "load"
    try:
        episodes = [telemetry.read_episode(p) for p in manifest.episode_paths]

        stage = "filter_outliers"
        if manifest.filter_outliers:
            kept, removed = telemetry.filter_outliers(episodes)
        else:
            kept, removed = list(episodes), []
        if len(kept) < 2:
            raise telemetry.TelemetryError("fewer than 2 episodes after filtering")
        telemetry.write_csv(
            out / "episodes.csv",
            ["player_id", "condition", "truth", "total_profit", "kept"],
            [
                (ep.player_id, ep.condition, ep.truth or "-", ep.total_profit(), int(ep in kept))
                for ep in episodes
            ],
        )

        stage = "state_matrix"
        sm = telemetry.build_state_matrix(kept)
        telemetry.write_csv(
            out / "state_matrix.csv",
            ["player_id", "week", *sm.columns],
            [
                (pid, wk, *[float(v) for v in row])
                for (pid, wk), row in zip(sm.row_index, sm.data)
            ],
        )

        stage = "pca"
        pc = numkit.pca(sm.data)
        telemetry.write_csv(
            out / "pca_loadings.csv",
            ["component", *sm.columns],
            [(i + 1, *[float(v) for v in pc.components[i]]) for i in range(len(pc.eigenvalues))],
        )
        telemetry.write_csv(
            out / "pca_scree.csv",
            ["component", "eigenvalue", "explained_fraction"],
            [
                (i + 1, float(pc.eigenvalues[i]), float(pc.explained_fraction[i]))
                for i in range(len(pc.eigenvalues))
            ],
        )

        stage = "state_clustering"
        weeks = [r.week for r in kept[0].weeks]
        n_weeks = len(weeks)
        scores2 = pc.scores[:, :2]
        tree = numkit.hcluster(points=scores2, linkage=manifest.state_linkage)
        flat = tree.cut(manifest.state_clusters)
        state_labels = flat.reshape(len(kept), n_weeks)
        telemetry.write_csv(
            out / "state_labels.csv",
            ["player_id", "week", "score1", "score2", "state"],
            [
                (pid, wk, float(s1), float(s2), int(lab))
                for (pid, wk), (s1, s2), lab in zip(sm.row_index, scores2, flat)
            ],
        )

        stage = "phases"
        seg = seqtype.derive_phases(state_labels, weeks, manifest.announcement_week)
        telemetry.write_csv(
            out / "phases.csv",
            ["phase", "start_week", "end_week", "dominant_state"],
            [(p.phase_id, p.start_week, p.end_week, p.dominant_state) for p in seg.phases],
        )

        stage = "deviations"
        dev = telemetry.build_deviation_sequences(kept)
        telemetry.write_csv(
            out / "deviations.csv",
            ["player_id", *[str(w) for w in dev.weeks]],
            [(pid, *[float(v) for v in row]) for pid, row in zip(dev.players, dev.sequences)],
        )

        stage = "bic_sweep"
        seqs = [row for row in dev.sequences]
        sweep, models = hmm_mod.bic_sweep(
            seqs,
            range(manifest.hmm_k_min, manifest.hmm_k_max + 1),
            n_restarts=manifest.hmm_restarts,
            seed=manifest.seed,
        )
        telemetry.write_csv(
            out / "bic.csv",
            ["n_states", "log_likelihood", "free_parameters", "bic", "selected"],
            [
                (
                    k,
                    float(sweep.candidates[k]["log_likelihood"]),
                    sweep.candidates[k]["p"],
                    float(sweep.candidates[k]["bic"]),
                    int(k == sweep.selected),
                )
                for k in sorted(sweep.candidates)
            ],
        )

        stage = "hmm_labeling"
        model = models[sweep.selected]
        labels = hmm_mod.label_states(model)
        (out / "hmm_model.txt").write_text(hmm_mod.serialize_model(model, labels))

        stage = "viterbi"
        sequences = []
        rows = []
        for pid, obs in zip(dev.players, dev.sequences):
            path = hmm_mod.viterbi(model, obs)
            labs = [labels[int(s)] for s in path]
            sequences.append(seqtype.ModeSequence(pid, labs))
            rows.extend(
                (pid, w, int(s), lab) for w, s, lab in zip(dev.weeks, path, labs)
            )
        telemetry.write_csv(out / "mode_sequences.csv", ["player_id", "week", "state", "label"], rows)

        stage = "player_typing"
        typing = seqtype.cluster_players(sequences, k=manifest.player_clusters)
        telemetry.write_csv(
            out / "player_types.csv",
            ["player_id", "cluster", "truth"],
            [
                (s.player_id, int(c), ep.truth or "-")
                for s, c, ep in zip(sequences, typing.labels, kept)
            ],
        )
        telemetry.write_csv(
            out / "typing_quality.csv",
            ["k", "wss", "silhouette"],
            [
                (k, float(typing.wss_curve.get(k, 0.0)), float(typing.silhouette_curve.get(k, 0.0)))
                for k in sorted(typing.wss_curve)
            ],
        )

        stage = "interaction_report"
        types = {s.player_id: f"type{c}" for s, c in zip(sequences, typing.labels)}
        conditions = {ep.player_id: ep.condition for ep in kept}
        report = seqtype.interaction_report(sequences, seg, types, conditions)
        _write_report(out, report)

        stage = "summary"
        accuracy = type_recovery_accuracy(typing.labels, [ep.truth for ep in kept])
        _write_summary(out, manifest, kept, removed, pc, seg, sweep, typing, accuracy)
    except PipelineError:
        raise
    except Exception as e:
        raise PipelineError(stage, e) from e
    return PipelineResult(
        output_dir=out, kept=kept, removed=removed, state_matrix=sm, pca=pc,
        state_labels=state_labels, segmentation=seg, deviations=dev, bic=sweep,
        model=model, mode_labels=labels, sequences=sequences, typing=typing,
        report=report, type_accuracy=accuracy,
    )


def type_recovery_accuracy(
    cluster_labels: np.ndarray, truths: Sequence[Optional[str]]
) -> Optional[float]:
    """Best accuracy over all assignments of clusters to truth labels."""
    if any(t is None for t in truths):
        return None
    truth_names = sorted(set(truths))
    clusters = sorted(set(int(c) for c in cluster_labels))
    best = 0
    for perm in itertools.permutations(truth_names, min(len(clusters), len(truth_names))):
        mapping = dict(zip(clusters, perm))
        hits = sum(1 for c, t in zip(cluster_labels, truths) if mapping.get(int(c)) == t)
        best = max(best, hits)
    return best / len(truths)


def _write_report(out: Path, report: seqtype.InteractionReport) -> None:
    rep_dir = out / "interaction"
    rep_dir.mkdir(exist_ok=True)
    for table in report.tables:
        rows = []
        for t in sorted(table.by_type):
            rows.append((t, "all", *table.by_type[t]))
        for (t, c) in sorted(table.by_type_condition):
            rows.append((t, c, *table.by_type_condition[(t, c)]))
        telemetry.write_csv(
            rep_dir / f"phase{table.phase_id}_presence.csv",
            ["player_type", "condition", *table.alphabet],
            rows,
        )
        chi = table.chi_type
        if chi is not None:
            kept_cols = [
                m for j, m in enumerate(table.alphabet) if j not in chi.dropped_cols
            ]
            kept_types = [
                t for i, t in enumerate(sorted(table.by_type)) if i not in chi.dropped_rows
            ]
            rows = []
            for i, t in enumerate(kept_types):
                for j, m in enumerate(kept_cols):
                    rows.append(
                        (
                            t, m,
                            float(chi.observed[i, j]), float(chi.expected[i, j]),
                            float(chi.pearson_residuals[i, j]), float(chi.cell_p_values[i, j]),
                        )
                    )
            telemetry.write_csv(
                rep_dir / f"phase{table.phase_id}_residuals.csv",
                ["player_type", "mode", "observed", "expected", "residual", "cell_p"],
                rows,
            )
    (out / "interaction_summary.txt").write_text(seqtype.summarize_report(report))


def _write_summary(out, manifest, kept, removed, pc, seg, sweep, typing, accuracy) -> None:
    lines = [
        f"seed: {manifest.seed}",
        f"episodes: {len(kept) + len(removed)} ({len(removed)} removed as outliers)",
        f"pca explained (2 components): {pc.cumulative_explained(2):.4f}",
        f"phases: "
        + "; ".join(
            f"{p.phase_id}: weeks {p.start_week}-{p.end_week} state {p.dominant_state}"
            for p in seg.phases
        ),
        f"hmm states selected: {sweep.selected} (D={sweep.data_size})",
        f"player clusters: k={typing.k}",
    ]
    if accuracy is not None:
        lines.append(f"type recovery accuracy: {accuracy:.4f}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
