"""Numerical kernel: PCA via Jacobi rotations, agglomerative clustering,
cluster quality measures, and the chi-square independence machinery.

Everything here is a pure function over immutable inputs, deterministic,
with fixed tie-breaking so repeated runs agree bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

WARD = "Ward"
AVERAGE = "Average"
COMPLETE = "Complete"
LINKAGES = (WARD, AVERAGE, COMPLETE)


class NumericError(Exception):
    pass


# -- PCA -------------------------------------------------------------------


def jacobi_eigh(S: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> Tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Iterates full sweeps until the off-diagonal Frobenius norm drops below
    `tol` (relative to the matrix norm). Returns eigenvalues in descending
    order and the matching eigenvectors as columns.
    """
    A = np.array(S, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T, atol=1e-10):
        raise NumericError("matrix must be symmetric")
    V = np.eye(n)
    offmask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        # max-based criterion: no squaring, so huge entries cannot overflow
        scale = max(1.0, float(np.abs(A).max()))
        if float(np.abs(A[offmask]).max(initial=0.0)) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:  # avoid overflow in theta^2
                    t = 1.0 / (2.0 * theta)
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                J_p = A[:, p].copy()
                J_q = A[:, q].copy()
                A[:, p] = c * J_p - s * J_q
                A[:, q] = s * J_p + c * J_q
                R_p = A[p, :].copy()
                R_q = A[q, :].copy()
                A[p, :] = c * R_p - s * R_q
                A[q, :] = s * R_p + c * R_q
                Vp = V[:, p].copy()
                Vq = V[:, q].copy()
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
    vals = np.diag(A).copy()
    order = np.argsort(-vals, kind="stable")
    return vals[order], V[:, order]


@dataclass
class PcaResult:
    components: np.ndarray  # (k, d) loading rows, descending eigenvalue
    eigenvalues: np.ndarray
    explained_fraction: np.ndarray
    scores: np.ndarray  # (n, k)

    def cumulative_explained(self, k: int) -> float:
        return float(self.explained_fraction[:k].sum())


def pca(Z: np.ndarray) -> PcaResult:
    """PCA of standardized data via Jacobi eigendecomposition of the covariance.

    Sign convention: the largest-magnitude entry of each loading is positive.
    """
    Z = np.asarray(Z, dtype=float)
    if not np.all(np.isfinite(Z)):
        raise NumericError("non-finite input")
    n, d = Z.shape
    if n < d:
        raise NumericError("need at least as many rows as columns")
    cov = (Z.T @ Z) / n
    vals, vecs = jacobi_eigh(cov)
    vals = np.maximum(vals, 0.0)
    for j in range(d):
        i = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[i, j] < 0:
            vecs[:, j] = -vecs[:, j]
    total = vals.sum()
    explained = vals / total if total > 0 else np.zeros_like(vals)
    return PcaResult(
        components=vecs.T.copy(),
        eigenvalues=vals,
        explained_fraction=explained,
        scores=Z @ vecs,
    )


# -- hierarchical clustering ----------------------------------------------


@dataclass
class ClusterTree:
    """Agglomerative merge history. Merge ids follow the scipy convention:
    leaves are 0..n-1, the i-th merge creates node n+i."""

    n: int
    merges: List[Tuple[int, int, float]]  # (id_a, id_b, height), sorted by height
    linkage: str

    def cut(self, k: int) -> np.ndarray:
        """Labels for exactly k clusters; cluster ids ordered by first member."""
        if k < 1 or k > self.n:
            raise NumericError("k must be in 1..n")
        parent = list(range(self.n + len(self.merges)))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for i, (a, b, _h) in enumerate(self.merges[: self.n - k]):
            node = self.n + i
            parent[find(a)] = node
            parent[find(b)] = node
        roots: Dict[int, int] = {}
        labels = np.empty(self.n, dtype=int)
        for i in range(self.n):
            r = find(i)
            if r not in roots:
                roots[r] = len(roots)
            labels[i] = roots[r]
        return labels


def _pairwise_sq(X: np.ndarray) -> np.ndarray:
    sq = (X ** 2).sum(axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(D, 0.0)
    return np.maximum(D, 0.0)


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    return np.sqrt(_pairwise_sq(np.asarray(X, dtype=float)))


def hcluster(
    points: Optional[np.ndarray] = None,
    dist: Optional[np.ndarray] = None,
    linkage: str = AVERAGE,
) -> ClusterTree:
    """Agglomerative clustering with Lance-Williams updates (nearest-neighbor
    chain, valid for Ward/Average/Complete). Deterministic: argmin ties go to
    the lowest index.

    Pass either raw points (Euclidean distance) or a symmetric distance
    matrix with a zero diagonal. Ward interprets a given matrix as Euclidean
    distances and reports heights on the scipy-compatible sqrt scale.
    """
    if linkage not in LINKAGES:
        raise NumericError(f"unknown linkage: {linkage!r}")
    if (points is None) == (dist is None):
        raise NumericError("pass exactly one of points or dist")
    if dist is not None:
        D0 = np.array(dist, dtype=float)
        n = D0.shape[0]
        if D0.shape != (n, n) or not np.allclose(D0, D0.T) or np.any(D0 < 0) or np.any(np.diag(D0) != 0):
            raise NumericError("dist must be symmetric nonnegative with zero diagonal")
        work = D0 ** 2 if linkage == WARD else D0.copy()
    else:
        X = np.asarray(points, dtype=float)
        n = X.shape[0]
        work = _pairwise_sq(X) if linkage == WARD else np.sqrt(_pairwise_sq(X))
    if n < 1:
        raise NumericError("need at least one observation")

    INF = np.inf
    D = work
    np.fill_diagonal(D, INF)
    size = np.ones(n + max(0, n - 1))
    node_id = list(range(n))  # active slot -> tree node id
    active = np.ones(n, dtype=bool)
    merges: List[Tuple[int, int, float]] = []
    next_id = n
    chain: List[int] = []
    remaining = n
    while remaining > 1:
        if not chain:
            chain.append(int(np.flatnonzero(active)[0]))
        while True:
            a = chain[-1]
            row = np.where(active, D[a], INF)
            row[a] = INF
            b = int(np.argmin(row))
            if len(chain) > 1 and b == chain[-2]:
                break
            chain.append(b)
        b = chain.pop()
        a = chain.pop()
        if a > b:
            a, b = b, a
        h = D[a, b]
        height = math.sqrt(h) if linkage == WARD else h
        merges.append((node_id[a], node_id[b], float(height)))
        sa, sb = size[node_id[a]], size[node_id[b]]
        # Lance-Williams update of distances to the merged cluster, stored in slot a
        if linkage == AVERAGE:
            newrow = (sa * D[a] + sb * D[b]) / (sa + sb)
        elif linkage == COMPLETE:
            newrow = np.maximum(D[a], D[b])
        else:  # Ward on squared distances
            sk = size[[node_id[i] for i in range(n)]]
            denom = sa + sb + sk
            newrow = ((sa + sk) * D[a] + (sb + sk) * D[b] - sk * h) / denom
        D[a] = newrow
        D[:, a] = newrow
        D[a, a] = INF
        active[b] = False
        D[b] = INF
        D[:, b] = INF
        size[next_id] = sa + sb
        node_id[a] = next_id
        next_id += 1
        remaining -= 1
        chain = [c for c in chain if c != a and c != b]
    order = sorted(range(len(merges)), key=lambda i: (merges[i][2], i))
    # remap node ids so merge i creates node n+i in sorted order
    remap = {i: i for i in range(n)}
    sorted_merges: List[Tuple[int, int, float]] = []
    for new_i, old_i in enumerate(order):
        a_id, b_id, hgt = merges[old_i]
        sorted_merges.append((remap[a_id], remap[b_id], hgt))
        remap[n + old_i] = n + new_i
    return ClusterTree(n=n, merges=sorted_merges, linkage=linkage)


def cluster_quality(
    points: np.ndarray,
    labels_per_k: Dict[int, np.ndarray],
    dist: Optional[np.ndarray] = None,
) -> Tuple[Dict[int, float], Dict[int, float]]:
    """WSS and average silhouette curves over a k sweep.

    WSS uses squared Euclidean distance to cluster centroids of `points`;
    the silhouette uses `dist` when given (else Euclidean distances of
    `points`). Singleton silhouettes are 0.
    """
    X = np.asarray(points, dtype=float)
    D = np.asarray(dist, dtype=float) if dist is not None else pairwise_distances(X)
    wss_curve: Dict[int, float] = {}
    sil_curve: Dict[int, float] = {}
    for k, labels in sorted(labels_per_k.items()):
        labels = np.asarray(labels)
        wss = 0.0
        for c in np.unique(labels):
            members = X[labels == c]
            centroid = members.mean(axis=0)
            wss += float(((members - centroid) ** 2).sum())
        wss_curve[k] = wss
        n = len(labels)
        s = np.zeros(n)
        for i in range(n):
            same = labels == labels[i]
            n_same = int(same.sum())
            if n_same <= 1:
                s[i] = 0.0
                continue
            a = D[i, same].sum() / (n_same - 1)
            b = math.inf
            for c in np.unique(labels):
                if c == labels[i]:
                    continue
                mask = labels == c
                b = min(b, D[i, mask].mean())
            s[i] = 0.0 if max(a, b) == 0 else (b - a) / max(a, b)
        sil_curve[k] = float(s.mean())
    return wss_curve, sil_curve


# -- chi-square machinery --------------------------------------------------


def _gamma_p_series(a: float, x: float, eps: float = 1e-12, itmax: int = 500) -> float:
    ap = a
    s = 1.0 / a
    term = s
    for _ in range(itmax):
        ap += 1.0
        term *= x / ap
        s += term
        if abs(term) < abs(s) * eps:
            break
    return s * math.exp(-x + a * math.log(x) - math.lgamma(a))

def _gamma_q_cf(a: float, x: float, eps: float = 1e-12, itmax: int = 500) -> float:
    # modified Lentz continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, itmax + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x) to ~1e-10 accuracy."""
    if a <= 0:
        raise NumericError("a must be positive")
    if x < 0:
        raise NumericError("x must be nonnegative")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_cf(a, x)


def chi_square_p_value(statistic: float, df: int) -> float:
    if df < 1:
        raise NumericError("df must be >= 1")
    return regularized_gamma_q(df / 2.0, statistic / 2.0)


def normal_two_sided_p(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


@dataclass
class ChiSquareResult:
    statistic: float
    degrees_of_freedom: int
    p_value: float
    observed: np.ndarray
    expected: np.ndarray
    pearson_residuals: np.ndarray
    cell_p_values: np.ndarray
    dropped_rows: List[int] = field(default_factory=list)
    dropped_cols: List[int] = field(default_factory=list)


def chi_square_independence(observed: np.ndarray, adjusted: bool = False) -> ChiSquareResult:
    """Pearson chi-square test of independence with per-cell residual p-values.

    All-zero rows/columns are dropped (and flagged). Cell p-values come from
    a two-sided normal on the Pearson residuals; `adjusted` switches to
    adjusted residuals.
    """
    O = np.array(observed, dtype=float)
    if O.ndim != 2 or np.any(O < 0) or not np.all(np.isfinite(O)):
        raise NumericError("observed must be a nonnegative 2-D table")
    row_keep = np.flatnonzero(O.sum(axis=1) > 0)
    col_keep = np.flatnonzero(O.sum(axis=0) > 0)
    dropped_rows = [i for i in range(O.shape[0]) if i not in row_keep]
    dropped_cols = [j for j in range(O.shape[1]) if j not in col_keep]
    O = O[np.ix_(row_keep, col_keep)]
    if O.size == 0 or O.sum() <= 0:
        raise NumericError("table total must be positive")
    total = O.sum()
    E = np.outer(O.sum(axis=1), O.sum(axis=0)) / total
    with np.errstate(divide="ignore", invalid="ignore"):
        resid = np.where(E > 0, (O - E) / np.sqrt(np.where(E > 0, E, 1.0)), 0.0)
    stat = float((resid ** 2).sum())
    r, c = O.shape
    df = max(1, (r - 1) * (c - 1))
    p = chi_square_p_value(stat, df)
    if adjusted:
        rfrac = O.sum(axis=1) / total
        cfrac = O.sum(axis=0) / total
        denom = np.sqrt(np.outer(1.0 - rfrac, 1.0 - cfrac))
        cell_res = np.where(denom > 0, resid / denom, 0.0)
    else:
        cell_res = resid
    cell_p = np.vectorize(normal_two_sided_p)(cell_res)
    return ChiSquareResult(
        statistic=stat,
        degrees_of_freedom=df,
        p_value=p,
        observed=O,
        expected=E,
        pearson_residuals=resid,
        cell_p_values=cell_p,
        dropped_rows=dropped_rows,
        dropped_cols=dropped_cols,
    )
