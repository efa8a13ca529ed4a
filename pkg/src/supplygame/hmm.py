"""Multi-sequence Gaussian hidden Markov model.

Log-domain forward/backward, Baum-Welch EM with restarts, Viterbi decoding,
a BIC sweep over the state count, and deterministic response-mode labeling
(N..., C, P...) ordered by emission mean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

SIGMA_FLOOR = 1e-3
LOG_2PI = math.log(2.0 * math.pi)


class HmmError(Exception):
    pass


@dataclass
class HmmModel:
    pi: np.ndarray  # (n,)
    A: np.ndarray  # (n, n) row-stochastic
    means: np.ndarray  # (n,)
    stds: np.ndarray  # (n,), >= SIGMA_FLOOR

    @property
    def n_states(self) -> int:
        return len(self.pi)

    def validate(self) -> None:
        n = self.n_states
        if abs(self.pi.sum() - 1.0) > 1e-12:
            raise HmmError("pi must sum to 1")
        if np.any(np.abs(self.A.sum(axis=1) - 1.0) > 1e-12):
            raise HmmError("A rows must sum to 1")
        if np.any(self.stds < SIGMA_FLOOR):
            raise HmmError(f"stddev below floor {SIGMA_FLOOR}")

    def free_parameters(self) -> int:
        n = self.n_states
        return (n - 1) + n * (n - 1) + 2 * n


def _as_batches(sequences: Sequence[Sequence[float]]) -> List[np.ndarray]:
    """Group sequences by length into (batch, T) arrays, preserving a stable
    mapping back to the original order via the second return value."""
    seqs = [np.asarray(s, dtype=float) for s in sequences]
    if not seqs or any(len(s) == 0 for s in seqs):
        raise HmmError("sequences must be non-empty")
    if any(not np.all(np.isfinite(s)) for s in seqs):
        raise HmmError("sequences must be finite")
    return seqs


def _log_emissions(model: HmmModel, batch: np.ndarray) -> np.ndarray:
    """(B, T, n) log Gaussian densities."""
    x = batch[..., None]
    mu = model.means[None, None, :]
    sd = model.stds[None, None, :]
    return -0.5 * (((x - mu) / sd) ** 2) - np.log(sd) - 0.5 * LOG_2PI


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.squeeze(m, axis=axis) + np.log(np.exp(a - m).sum(axis=axis))


def _forward(model: HmmModel, logB: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Log-domain forward pass. Returns (log_alpha (B,T,n), per-sequence logL)."""
    Bsz, T, n = logB.shape
    with np.errstate(divide="ignore"):
        logpi = np.log(model.pi)
        logA = np.log(model.A)
    alpha = np.empty((Bsz, T, n))
    alpha[:, 0] = logpi[None, :] + logB[:, 0]
    for t in range(1, T):
        alpha[:, t] = logB[:, t] + _logsumexp(alpha[:, t - 1, :, None] + logA[None], axis=1)
    return alpha, _logsumexp(alpha[:, -1], axis=1)


def _backward(model: HmmModel, logB: np.ndarray) -> np.ndarray:
    Bsz, T, n = logB.shape
    with np.errstate(divide="ignore"):
        logA = np.log(model.A)
    beta = np.zeros((Bsz, T, n))
    for t in range(T - 2, -1, -1):
        beta[:, t] = _logsumexp(
            logA[None] + (logB[:, t + 1] + beta[:, t + 1])[:, None, :], axis=2
        )
    return beta


def log_likelihood(model: HmmModel, sequences: Sequence[Sequence[float]]) -> float:
    """Total log P(sequences | model), sequences independent."""
    model.validate()
    total = 0.0
    for batch, _idx in _length_groups(_as_batches(sequences)):
        _, ll = _forward(model, _log_emissions(model, batch))
        total += float(ll.sum())
    return total


def _length_groups(seqs: List[np.ndarray]) -> List[Tuple[np.ndarray, List[int]]]:
    groups: Dict[int, List[int]] = {}
    for i, s in enumerate(seqs):
        groups.setdefault(len(s), []).append(i)
    return [(np.stack([seqs[i] for i in idx]), idx) for _, idx in sorted(groups.items())]


def viterbi(model: HmmModel, sequence: Sequence[float]) -> np.ndarray:
    """Most likely state path, log-domain DP, ties toward the lower state index."""
    model.validate()
    x = np.asarray(sequence, dtype=float)
    if len(x) == 0:
        raise HmmError("sequence must be non-empty")
    logB = _log_emissions(model, x[None])[0]
    with np.errstate(divide="ignore"):
        logpi = np.log(model.pi)
        logA = np.log(model.A)
    T, n = logB.shape
    delta = logpi + logB[0]
    back = np.zeros((T, n), dtype=int)
    for t in range(1, T):
        cand = delta[:, None] + logA
        back[t] = np.argmax(cand, axis=0)  # first max -> lowest index
        delta = cand[back[t], np.arange(n)] + logB[t]
    path = np.empty(T, dtype=int)
    path[-1] = int(np.argmax(delta))
    for t in range(T - 2, -1, -1):
        path[t] = back[t + 1][path[t + 1]]
    return path


@dataclass
class FitInfo:
    log_likelihood: float
    iterations: int
    ll_history: List[float]
    reinitialized_states: List[int]
    restart_index: int


def _init_model(pooled: np.ndarray, n_states: int, rng: np.random.Generator) -> HmmModel:
    # means from k-quantiles of the pooled data, uniform pi/A plus jitter
    qs = (np.arange(n_states) + 0.5) / n_states
    means = np.quantile(pooled, qs)
    sd = max(float(pooled.std()), SIGMA_FLOOR)
    stds = np.full(n_states, sd if sd > 0 else 1.0)
    pi = np.full(n_states, 1.0 / n_states) + rng.uniform(0, 0.01, n_states)
    pi /= pi.sum()
    A = np.full((n_states, n_states), 1.0 / n_states) + rng.uniform(0, 0.01, (n_states, n_states))
    A /= A.sum(axis=1, keepdims=True)
    return HmmModel(pi=pi, A=A, means=means, stds=stds)


def _em_once(
    seqs: List[np.ndarray],
    model: HmmModel,
    tol: float,
    max_iters: int,
) -> Tuple[HmmModel, FitInfo]:
    pooled = np.concatenate(seqs)
    groups = _length_groups(seqs)
    n = model.n_states
    history: List[float] = []
    reinit: List[int] = []
    prev_ll = -math.inf
    it = 0
    for it in range(1, max_iters + 1):
        pi_acc = np.zeros(n)
        xi_acc = np.zeros((n, n))
        g_sum = np.zeros(n)
        gx_sum = np.zeros(n)
        gxx_sum = np.zeros(n)
        total_ll = 0.0
        for batch, _idx in groups:
            logBm = _log_emissions(model, batch)
            alpha, ll = _forward(model, logBm)
            beta = _backward(model, logBm)
            total_ll += float(ll.sum())
            loggamma = alpha + beta - ll[:, None, None]
            gamma = np.exp(loggamma)
            pi_acc += gamma[:, 0].sum(axis=0)
            with np.errstate(divide="ignore"):
                logA = np.log(model.A)
            # xi summed over t and sequences
            for t in range(batch.shape[1] - 1):
                logxi = (
                    alpha[:, t, :, None]
                    + logA[None]
                    + (logBm[:, t + 1] + beta[:, t + 1])[:, None, :]
                    - ll[:, None, None]
                )
                xi_acc += np.exp(logxi).sum(axis=0)
            g = gamma.reshape(-1, n)
            x = batch.reshape(-1)
            g_sum += g.sum(axis=0)
            gx_sum += g.T @ x
            gxx_sum += g.T @ (x * x)
        history.append(total_ll)
        if total_ll < prev_ll - 1e-8:
            raise HmmError("EM log-likelihood decreased")
        if total_ll - prev_ll < tol and it > 1:
            break
        prev_ll = total_ll
        # M step
        degenerate = np.flatnonzero(g_sum < 1e-8)
        pi = pi_acc / pi_acc.sum()
        row = xi_acc.sum(axis=1, keepdims=True)
        A = np.where(row > 0, xi_acc / np.where(row > 0, row, 1.0), 1.0 / n)
        A /= A.sum(axis=1, keepdims=True)
        safe = np.where(g_sum > 0, g_sum, 1.0)
        means = gx_sum / safe
        var = gxx_sum / safe - means ** 2
        stds = np.sqrt(np.maximum(var, SIGMA_FLOOR ** 2))
        for s in degenerate:
            if s in reinit:
                continue  # reinitialize once, then leave flagged
            reinit.append(int(s))
            means[s] = float(np.quantile(pooled, (s + 0.5) / n))
            stds[s] = max(float(pooled.std()), SIGMA_FLOOR)
            pi[s] = 1.0 / n
            A[s] = 1.0 / n
            pi /= pi.sum()
            A /= A.sum(axis=1, keepdims=True)
        model = HmmModel(pi=pi, A=A, means=means, stds=stds)
    final_ll = history[-1]
    return model, FitInfo(final_ll, it, history, reinit, restart_index=-1)


def fit_em(
    sequences: Sequence[Sequence[float]],
    n_states: int,
    n_restarts: int = 10,
    seed: int = 0,
    tol: float = 1e-6,
    max_iters: int = 500,
) -> Tuple[HmmModel, FitInfo]:
    """Multi-sequence Baum-Welch; returns the best restart by log-likelihood.

    Restart r uses a seed derived from the master seed by a fixed offset, so
    restarts are independent and reproducible.
    """
    if n_states < 1:
        raise HmmError("n_states must be >= 1")
    seqs = _as_batches(sequences)
    n_obs = sum(len(s) for s in seqs)
    if n_obs <= 3 * n_states:
        raise HmmError("not enough observations for this many states")
    best: Optional[Tuple[HmmModel, FitInfo]] = None
    pooled = np.concatenate(seqs)
    for r in range(max(1, n_restarts)):
        rng = np.random.default_rng(seed * 100003 + r)
        model0 = _init_model(pooled, n_states, rng)
        model, info = _em_once(seqs, model0, tol, max_iters)
        info.restart_index = r
        if best is None or info.log_likelihood > best[1].log_likelihood:
            best = (model, info)
    return best


@dataclass
class BicSweepResult:
    candidates: Dict[int, dict]  # n_states -> {log_likelihood, p, bic}
    selected: int
    data_size: int
    failed: Dict[int, str] = field(default_factory=dict)

    def bic_curve(self) -> List[Tuple[int, float]]:
        return [(k, self.candidates[k]["bic"]) for k in sorted(self.candidates)]


def bic(log_l: float, p: int, data_size: int) -> float:
    return -2.0 * log_l + p * math.log(data_size)


def bic_sweep(
    sequences: Sequence[Sequence[float]],
    k_range: Iterable[int],
    n_restarts: int = 10,
    seed: int = 0,
    tol: float = 1e-6,
    max_iters: int = 500,
) -> Tuple[BicSweepResult, Dict[int, HmmModel]]:
    """Fit every candidate state count and select the BIC argmin (ties: smaller k).

    The data size D is the total number of scalar observations.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise HmmError("k_range must be non-empty")
    seqs = _as_batches(sequences)
    D = sum(len(s) for s in seqs)
    candidates: Dict[int, dict] = {}
    models: Dict[int, HmmModel] = {}
    failed: Dict[int, str] = {}
    for k in ks:
        try:
            model, info = fit_em(sequences, k, n_restarts=n_restarts, seed=seed, tol=tol, max_iters=max_iters)
        except HmmError as e:
            failed[k] = str(e)
            continue
        p = model.free_parameters()
        candidates[k] = {
            "log_likelihood": info.log_likelihood,
            "p": p,
            "bic": bic(info.log_likelihood, p, D),
        }
        models[k] = model
    if not candidates:
        raise HmmError("every candidate state count failed")
    selected = min(sorted(candidates), key=lambda k: (candidates[k]["bic"], k))
    return BicSweepResult(candidates, selected, D, failed), models


def label_states(model: HmmModel, tol: float = 1e-9) -> Dict[int, str]:
    """Deterministic mode labels ordered by emission mean.

    The state with the smallest |mean| is the control mode C (lower index
    wins exact ties); states below C get N-labels with N1 nearest C, states
    above get P1..Pk by increasing mean.
    """
    means = model.means
    order = np.array(sorted(range(len(means)), key=lambda i: (means[i], i)))
    abs_means = np.abs(means)
    tied = [i for i in range(len(means)) if abs_means[i] <= abs_means.min() + tol]
    c_state = min(tied)
    labels: Dict[int, str] = {}
    c_pos = int(np.flatnonzero(order == c_state)[0])
    labels[c_state] = "C"
    for offset, i in enumerate(order[:c_pos][::-1], start=1):
        labels[int(i)] = f"N{offset}"
    for offset, i in enumerate(order[c_pos + 1:], start=1):
        labels[int(i)] = f"P{offset}"
    return labels


def label_order_key(label: str) -> float:
    """Sort key placing labels in emission-mean order: N2, N1, C, P1, P2..."""
    if label == "C":
        return 0.0
    if label.startswith("N"):
        return -float(label[1:])
    if label.startswith("P"):
        return float(label[1:])
    raise HmmError(f"unknown mode label: {label!r}")


def serialize_model(model: HmmModel, labels: Optional[Dict[int, str]] = None) -> str:
    """Plain-text model dump: n, pi row, A rows, (mean, std) rows, label map."""
    labels = labels or label_states(model)
    n = model.n_states
    lines = [f"n_states {n}"]
    lines.append("pi " + " ".join(f"{v:.17g}" for v in model.pi))
    for i in range(n):
        lines.append(f"A{i} " + " ".join(f"{v:.17g}" for v in model.A[i]))
    for i in range(n):
        lines.append(f"emission{i} {model.means[i]:.17g} {model.stds[i]:.17g}")
    lines.append("labels " + " ".join(f"{i}:{labels[i]}" for i in range(n)))
    return "\n".join(lines) + "\n"


def deserialize_model(text: str) -> Tuple[HmmModel, Dict[int, str]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    n = int(lines[0].split()[1])
    pi = np.array([float(v) for v in lines[1].split()[1:]])
    A = np.array([[float(v) for v in lines[2 + i].split()[1:]] for i in range(n)])
    means = np.empty(n)
    stds = np.empty(n)
    for i in range(n):
        _, m, s = lines[2 + n + i].split()
        means[i], stds[i] = float(m), float(s)
    labels = {}
    for kv in lines[2 + 2 * n].split()[1:]:
        i, lab = kv.split(":")
        labels[int(i)] = lab
    model = HmmModel(pi=pi, A=A, means=means, stds=stds)
    return model, labels
