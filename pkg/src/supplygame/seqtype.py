"""Player typing from response-mode sequences and the phase interaction report.

Distance between two equal-length mode sequences is L minus the length of
their longest common prefix. Player types come from average-linkage
clustering of that distance; phases are maximal runs of the week-wise
dominant system state with a forced split at the announcement week.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import numkit
from .numkit import ChiSquareResult, ClusterTree
from .hmm import label_order_key


class SeqTypeError(Exception):
    pass


@dataclass
class ModeSequence:
    player_id: str
    labels: List[str]

    def __len__(self) -> int:
        return len(self.labels)


def lcp_similarity(a: ModeSequence, b: ModeSequence) -> int:
    """Length of the longest common prefix; L - LCP serves as distance."""
    if len(a) != len(b):
        raise SeqTypeError("sequences must have equal length")
    n = 0
    for x, y in zip(a.labels, b.labels):
        if x != y:
            break
        n += 1
    return n


def lcp_distance_matrix(sequences: Sequence[ModeSequence]) -> np.ndarray:
    n = len(sequences)
    L = len(sequences[0]) if n else 0
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = L - lcp_similarity(sequences[i], sequences[j])
            D[i, j] = D[j, i] = d
    return D


def mode_frequency_vectors(sequences: Sequence[ModeSequence], alphabet: Sequence[str]) -> np.ndarray:
    """Per-player fraction of weeks spent in each mode (used for WSS curves)."""
    idx = {m: j for j, m in enumerate(alphabet)}
    V = np.zeros((len(sequences), len(alphabet)))
    for i, seq in enumerate(sequences):
        for lab in seq.labels:
            V[i, idx[lab]] += 1
        V[i] /= len(seq)
    return V


def mode_alphabet(sequences: Sequence[ModeSequence]) -> List[str]:
    seen = set()
    for s in sequences:
        seen.update(s.labels)
    return sorted(seen, key=label_order_key)


@dataclass
class PlayerTyping:
    labels: np.ndarray  # cluster id per player, selected k
    k: int
    wss_curve: Dict[int, float]
    silhouette_curve: Dict[int, float]
    tree: ClusterTree
    distance: np.ndarray
    all_identical: bool = False


def cluster_players(
    sequences: Sequence[ModeSequence],
    k_range: Sequence[int] = (2, 3, 4, 5, 6),
    k: int = 3,
) -> PlayerTyping:
    """Average-linkage clustering on the prefix distance matrix.

    Emits WSS (on mode-frequency vectors) and silhouette (on the prefix
    distance) curves for the sweep; the default selected k is 3 and is
    overridable. Identical sequences collapse to one cluster and are flagged.
    """
    n = len(sequences)
    if n < max(k, 1):
        raise SeqTypeError("need at least k players")
    D = lcp_distance_matrix(sequences)
    if np.all(D == 0):
        return PlayerTyping(
            labels=np.zeros(n, dtype=int), k=1, wss_curve={}, silhouette_curve={},
            tree=numkit.hcluster(dist=D, linkage=numkit.AVERAGE), distance=D,
            all_identical=True,
        )
    tree = numkit.hcluster(dist=D, linkage=numkit.AVERAGE)
    freq = mode_frequency_vectors(sequences, mode_alphabet(sequences))
    labels_per_k = {kk: tree.cut(kk) for kk in k_range if 1 <= kk <= n}
    wss, sil = numkit.cluster_quality(freq, labels_per_k, dist=D)
    return PlayerTyping(
        labels=tree.cut(k), k=k, wss_curve=wss, silhouette_curve=sil,
        tree=tree, distance=D,
    )


@dataclass
class Phase:
    phase_id: int
    start_week: int
    end_week: int
    dominant_state: int

    def weeks(self) -> List[int]:
        return list(range(self.start_week, self.end_week + 1))


@dataclass
class PhaseSegmentation:
    phases: List[Phase]
    dominant_by_week: Dict[int, int]
    announcement_split: bool


def derive_phases(
    state_labels: np.ndarray,
    weeks: Sequence[int],
    announcement_week: int,
) -> PhaseSegmentation:
    """Segment the horizon into phases of constant dominant system state.

    `state_labels` is (players, weeks) of cluster ids. The dominant state per
    week is the modal label (ties to the smaller id); contiguous runs form
    phases, and the run containing the announcement week is split at it.
    """
    S = np.asarray(state_labels)
    if S.ndim != 2 or S.shape[1] != len(weeks):
        raise SeqTypeError("state_labels must be (players, weeks)")
    dominant: Dict[int, int] = {}
    for j, w in enumerate(weeks):
        vals, counts = np.unique(S[:, j], return_counts=True)
        dominant[w] = int(vals[np.argmax(counts)])  # first max -> smaller id
    phases: List[Phase] = []
    start = weeks[0]
    for i in range(1, len(weeks) + 1):
        w = weeks[i] if i < len(weeks) else None
        boundary = (
            w is None
            or dominant[w] != dominant[weeks[i - 1]]
            or w == announcement_week
        )
        if boundary:
            phases.append(Phase(len(phases) + 1, start, weeks[i - 1], dominant[start]))
            if w is not None:
                start = w
    split = any(p.start_week == announcement_week for p in phases) and announcement_week != weeks[0]
    return PhaseSegmentation(phases, dominant, split)


@dataclass
class PhaseTable:
    phase_id: int
    alphabet: List[str]
    by_type: Dict[str, List[int]]  # type -> presence counts per mode
    by_type_condition: Dict[Tuple[str, str], List[int]]
    chi_type: Optional[ChiSquareResult]
    chi_type_condition: Optional[ChiSquareResult]


@dataclass
class InteractionReport:
    tables: List[PhaseTable]
    skipped_phases: List[int]
    group_sizes: Dict[str, int]


def interaction_report(
    sequences: Sequence[ModeSequence],
    segmentation: PhaseSegmentation,
    types: Dict[str, str],
    conditions: Dict[str, str],
    adjusted: bool = False,
) -> InteractionReport:
    """Per phase, count players whose in-phase subsequence contains each mode.

    Presence semantics: a player counts once per (phase, mode) regardless of
    how many weeks the mode occupies. Each phase gets a type x mode table and
    a (type, condition) x mode table, both with chi-square residual analysis.
    """
    for s in sequences:
        if s.player_id not in types or s.player_id not in conditions:
            raise SeqTypeError(f"player {s.player_id!r} lacks a type or condition")
    alphabet = mode_alphabet(sequences)
    week0 = segmentation.phases[0].start_week if segmentation.phases else 0
    tables: List[PhaseTable] = []
    skipped: List[int] = []
    type_names = sorted(set(types.values()))
    cond_names = sorted(set(conditions.values()))
    sizes: Dict[str, int] = {t: sum(1 for p in types.values() if p == t) for t in type_names}
    for phase in segmentation.phases:
        weeks = phase.weeks()
        if not weeks:
            skipped.append(phase.phase_id)
            continue
        by_type = {t: [0] * len(alphabet) for t in type_names}
        by_tc = {(t, c): [0] * len(alphabet) for t in type_names for c in cond_names}
        any_week = False
        for s in sequences:
            lo = phase.start_week - week0
            hi = phase.end_week - week0 + 1
            sub = s.labels[lo:hi]
            if not sub:
                continue
            any_week = True
            present = set(sub)
            t = types[s.player_id]
            c = conditions[s.player_id]
            for j, m in enumerate(alphabet):
                if m in present:
                    by_type[t][j] += 1
                    by_tc[(t, c)][j] += 1
        if not any_week:
            skipped.append(phase.phase_id)
            continue
        obs_t = np.array([by_type[t] for t in type_names], dtype=float)
        obs_tc = np.array([by_tc[(t, c)] for t in type_names for c in cond_names], dtype=float)
        chi_t = _safe_chi(obs_t, adjusted)
        chi_tc = _safe_chi(obs_tc, adjusted)
        tables.append(PhaseTable(phase.phase_id, alphabet, by_type, by_tc, chi_t, chi_tc))
    return InteractionReport(tables, skipped, sizes)


def _safe_chi(obs: np.ndarray, adjusted: bool) -> Optional[ChiSquareResult]:
    try:
        return numkit.chi_square_independence(obs, adjusted=adjusted)
    except numkit.NumericError:
        return None


def summarize_report(report: InteractionReport, alpha: float = 0.05) -> str:
    """Human-readable per-phase listing of significantly over/under-represented modes."""
    lines: List[str] = []
    for table in report.tables:
        lines.append(f"Phase {table.phase_id}:")
        chi = table.chi_type
        if chi is None:
            lines.append("  (no testable table)")
            continue
        type_names = sorted(table.by_type)
        kept_rows = [i for i in range(len(type_names)) if i not in chi.dropped_rows]
        kept_cols = [j for j in range(len(table.alphabet)) if j not in chi.dropped_cols]
        lines.append(
            f"  chi2={chi.statistic:.4f} df={chi.degrees_of_freedom} p={chi.p_value:.4g}"
        )
        for ri, i in enumerate(kept_rows):
            for cj, j in enumerate(kept_cols):
                p = chi.cell_p_values[ri, cj]
                if p < alpha:
                    sign = "+" if chi.pearson_residuals[ri, cj] > 0 else "-"
                    lines.append(
                        f"  {type_names[i]} {table.alphabet[j]}: {sign} (p={p:.4g})"
                    )
    return "\n".join(lines) + "\n"
