"""Clustering of coupling features and risk labeling of the clusters.

All three algorithms operate on plain float arrays under Euclidean
distance. DBSCAN deduplicates identical rows first (the feature space is
heavily discrete), which keeps the partition exactly equal to the
classic algorithm on the expanded data while staying order-independent.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyInput, KTooLarge
from .features import FeatureVector, RiskLevel


class Algorithm(enum.Enum):
    DBSCAN = "dbscan"
    AGGLOMERATIVE = "agglomerative"
    GMM = "gmm"


class Linkage(enum.Enum):
    WARD = "ward"
    AVERAGE = "average"
    COMPLETE = "complete"


class Covariance(enum.Enum):
    DIAGONAL = "diagonal"
    SPHERICAL = "spherical"


@dataclass
class ClusteringConfig:
    algorithm: Algorithm = Algorithm.DBSCAN
    eps: float = 0.05
    min_pts: int = 10
    k: Optional[int] = None  # None: reuse the DBSCAN cluster count
    linkage: Linkage = Linkage.WARD
    gmm_max_iter: int = 200
    gmm_tolerance: float = 1e-6
    covariance: Covariance = Covariance.DIAGONAL
    seed: int = 0

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be at least 1")


@dataclass
class ClusterAssignment:
    """Integer label per sample; -1 marks DBSCAN noise."""

    labels: np.ndarray
    algorithm: Algorithm
    config: dict
    seed: Optional[int] = None
    log_likelihoods: Optional[list[float]] = None
    merge_count: Optional[int] = None

    @property
    def n_clusters(self) -> int:
        return len(set(int(l) for l in self.labels) - {-1})

    def cluster_indices(self) -> list[int]:
        present = sorted(set(int(l) for l in self.labels))
        return present


def _canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Renumber clusters by first-sample index; -1 is preserved."""
    mapping: dict[int, int] = {}
    out = np.full(labels.shape, -1, dtype=int)
    nxt = 0
    for i, l in enumerate(labels):
        l = int(l)
        if l == -1:
            continue
        if l not in mapping:
            mapping[l] = nxt
            nxt += 1
        out[i] = mapping[l]
    return out


def _pairwise_sq(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = (
        np.sum(x * x, axis=1)[:, None]
        + np.sum(y * y, axis=1)[None, :]
        - 2.0 * (x @ y.T)
    )
    np.maximum(d, 0.0, out=d)
    return d


def dbscan(vectors: np.ndarray, eps: float, min_pts: int) -> ClusterAssignment:
    """Density clustering; border points attach to their nearest core
    point, so the partition does not depend on input order."""
    x = np.asarray(vectors, dtype=float)
    if x.size == 0:
        raise EmptyInput("dbscan requires at least one vector")
    uniq, inverse, counts = np.unique(x, axis=0, return_inverse=True, return_counts=True)
    m = len(uniq)
    sq = _pairwise_sq(uniq, uniq)
    within = sq <= eps * eps
    weighted = within @ counts  # neighborhood sizes in the expanded data
    core = weighted >= min_pts

    # connected components over cores within eps
    u_labels = np.full(m, -1, dtype=int)
    cluster = 0
    for start in range(m):
        if not core[start] or u_labels[start] != -1:
            continue
        stack = [start]
        u_labels[start] = cluster
        while stack:
            node = stack.pop()
            for nb in np.nonzero(within[node] & core)[0]:
                if u_labels[nb] == -1:
                    u_labels[nb] = cluster
                    stack.append(nb)
        cluster += 1

    # border points: nearest core within eps; distance ties resolved by
    # a geometric cluster key so permutations cannot flip the partition
    core_idx = np.nonzero(core)[0]
    if core_idx.size:
        cluster_keys = {}
        for c in range(cluster):
            members = uniq[core_idx[u_labels[core_idx] == c]]
            cluster_keys[c] = min(tuple(row) for row in members)
        for i in range(m):
            if core[i] or not within[i, core_idx].any():
                continue
            cand = core_idx[within[i, core_idx]]
            dists = sq[i, cand]
            best = dists.min()
            tied = cand[dists <= best]
            u_labels[i] = min(
                (int(u_labels[j]) for j in tied),
                key=lambda c: cluster_keys[c],
            )

    labels = _canonical_labels(u_labels[inverse])
    return ClusterAssignment(
        labels,
        Algorithm.DBSCAN,
        {"eps": eps, "min_pts": min_pts},
    )


def k_distance(vectors: np.ndarray, k: int) -> np.ndarray:
    """Sorted distance to the k-th nearest neighbour, the usual helper
    for picking eps."""
    x = np.asarray(vectors, dtype=float)
    sq = _pairwise_sq(x, x)
    sq.sort(axis=1)
    return np.sort(np.sqrt(sq[:, min(k, sq.shape[1] - 1)]))


_LW_COEFFS = {
    # average / complete operate on plain Euclidean distances
    Linkage.AVERAGE: lambda ni, nj, nk: (ni / (ni + nj), nj / (ni + nj), 0.0, 0.0),
    Linkage.COMPLETE: lambda ni, nj, nk: (0.5, 0.5, 0.0, 0.5),
}


def agglomerative(
    vectors: np.ndarray, k: int, linkage: Linkage = Linkage.WARD
) -> ClusterAssignment:
    """Bottom-up merging until k clusters remain; equal-distance ties go
    to the lexicographically smallest cluster-index pair."""
    x = np.asarray(vectors, dtype=float)
    n = len(x)
    if n == 0:
        raise EmptyInput("agglomerative requires at least one vector")
    if k < 1 or k > n:
        raise KTooLarge(f"k={k} out of range for {n} samples")

    sq = _pairwise_sq(x, x)
    if linkage is Linkage.WARD:
        dist = sq / 2.0  # Ward objective increments start at ||a-b||^2 / 2
    else:
        dist = np.sqrt(sq)
    np.fill_diagonal(dist, np.inf)
    active = np.ones(n, dtype=bool)
    sizes = np.ones(n, dtype=float)
    members: list[list[int]] = [[i] for i in range(n)]
    row_min = dist.min(axis=1) if n > 1 else np.array([np.inf])
    row_arg = dist.argmin(axis=1) if n > 1 else np.array([0])

    merges = 0
    for _ in range(n - k):
        live = np.nonzero(active)[0]
        i = live[int(np.argmin(row_min[live]))]
        j = int(row_arg[i])
        if j < i:
            i, j = j, i
        ni, nj = sizes[i], sizes[j]

        # Lance-Williams update of cluster i = i U j
        others = active.copy()
        others[i] = others[j] = False
        idx = np.nonzero(others)[0]
        if idx.size:
            if linkage is Linkage.WARD:
                nk = sizes[idx]
                total = ni + nj + nk
                new = (
                    (ni + nk) / total * dist[i, idx]
                    + (nj + nk) / total * dist[j, idx]
                    - nk / total * dist[i, j]
                )
            else:
                ai, aj, b, g = _LW_COEFFS[linkage](ni, nj, None)
                new = (
                    ai * dist[i, idx]
                    + aj * dist[j, idx]
                    + b * dist[i, j]
                    + g * np.abs(dist[i, idx] - dist[j, idx])
                )
            dist[i, idx] = new
            dist[idx, i] = new
            # merged distances may undercut cached row minima
            closer = new < row_min[idx]
            row_min[idx[closer]] = new[closer]
            row_arg[idx[closer]] = i
        dist[i, i] = np.inf
        active[j] = False
        dist[j, :] = np.inf
        dist[:, j] = np.inf
        sizes[i] = ni + nj
        members[i].extend(members[j])
        merges += 1

        # refresh nearest-neighbour cache
        live = np.nonzero(active)[0]
        if live.size > 1:
            stale = [i] + [
                int(r) for r in live if row_arg[r] in (i, j) and r != i
            ]
            for r in stale:
                row_arg[r] = int(np.argmin(dist[r]))
                row_min[r] = dist[r, row_arg[r]]
            # rows whose cached nearest moved closer stay valid; rows whose
            # nearest was i get refreshed above
            row_min[j] = np.inf

    labels = np.full(n, -1, dtype=int)
    order = sorted(np.nonzero(active)[0], key=lambda c: min(members[c]))
    for new_label, c in enumerate(order):
        for idx in members[c]:
            labels[idx] = new_label
    return ClusterAssignment(
        labels,
        Algorithm.AGGLOMERATIVE,
        {"k": k, "linkage": linkage.value},
        merge_count=merges,
    )


def _kmeanspp_means(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    means = np.empty((k, x.shape[1]))
    first = int(rng.integers(n))
    means[0] = x[first]
    closest = _pairwise_sq(x, means[:1]).ravel()
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            means[i] = x[int(rng.integers(n))]
            continue
        probs = closest / total
        choice = int(rng.choice(n, p=probs))
        means[i] = x[choice]
        closest = np.minimum(closest, _pairwise_sq(x, means[i : i + 1]).ravel())
    return means


def gmm_em(
    vectors: np.ndarray,
    k: int,
    max_iter: int = 200,
    tolerance: float = 1e-6,
    covariance: Covariance = Covariance.DIAGONAL,
    seed: int = 0,
    var_floor: float = 1e-6,
) -> ClusterAssignment:
    """Seeded EM for a Gaussian mixture; hard labels by maximum
    responsibility, log-likelihood recorded per iteration."""
    x = np.asarray(vectors, dtype=float)
    n = len(x)
    if n == 0:
        raise EmptyInput("gmm requires at least one vector")
    if k < 1:
        raise ValueError("k must be at least 1")
    d = x.shape[1]
    rng = np.random.default_rng(seed)
    means = _kmeanspp_means(x, k, rng)
    data_var = np.maximum(x.var(axis=0), var_floor)
    variances = np.tile(data_var, (k, 1))
    weights = np.full(k, 1.0 / k)
    lls: list[float] = []

    for _ in range(max_iter):
        # E step in log space
        log_prob = np.empty((n, k))
        for c in range(k):
            var = np.maximum(variances[c], var_floor)
            diff = x - means[c]
            log_prob[:, c] = (
                -0.5 * np.sum(diff * diff / var, axis=1)
                - 0.5 * np.sum(np.log(2.0 * np.pi * var))
                + np.log(weights[c])
            )
        mx = log_prob.max(axis=1, keepdims=True)
        log_norm = mx.ravel() + np.log(np.exp(log_prob - mx).sum(axis=1))
        ll = float(log_norm.sum())
        lls.append(ll)
        resp = np.exp(log_prob - log_norm[:, None])

        # M step
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        weights = nk / n
        means = (resp.T @ x) / nk[:, None]
        for c in range(k):
            diff = x - means[c]
            var = (resp[:, c][:, None] * diff * diff).sum(axis=0) / nk[c]
            if covariance is Covariance.SPHERICAL:
                var = np.full(d, var.mean())
            variances[c] = np.maximum(var, var_floor)

        if len(lls) > 1 and abs(lls[-1] - lls[-2]) < tolerance:
            break

    log_prob = np.empty((n, k))
    for c in range(k):
        var = np.maximum(variances[c], var_floor)
        diff = x - means[c]
        log_prob[:, c] = (
            -0.5 * np.sum(diff * diff / var, axis=1)
            - 0.5 * np.sum(np.log(2.0 * np.pi * var))
            + np.log(weights[c])
        )
    labels = _canonical_labels(log_prob.argmax(axis=1))
    return ClusterAssignment(
        labels,
        Algorithm.GMM,
        {
            "k": k,
            "max_iter": max_iter,
            "tolerance": tolerance,
            "covariance": covariance.value,
        },
        seed=seed,
        log_likelihoods=lls,
    )


# -- cluster risk values ---------------------------------------------------

LEVEL_LADDER = ("L", "LM", "ML", "M", "MH", "HM", "H")


def crv_to_level(crv: float) -> str:
    """Seven-step risk ladder over [1, 3]; the half-point boundaries
    close downward (1.5 -> LM, 2.5 -> MH), the integers stand alone."""
    if not 1.0 <= crv <= 3.0:
        raise ValueError(f"cluster risk value {crv} outside [1, 3]")
    if crv == 1.0:
        return "L"
    if crv <= 1.5:
        return "LM"
    if crv < 2.0:
        return "ML"
    if crv == 2.0:
        return "M"
    if crv <= 2.5:
        return "MH"
    if crv < 3.0:
        return "HM"
    return "H"


@dataclass
class ClusterRiskSummary:
    index: int
    n_high: int
    n_medium: int
    n_low: int
    crv: float
    level: str
    sample_count: int


def _risk_counts(codes: Sequence[int]) -> tuple[int, int, int]:
    high = sum(1 for c in codes if c == RiskLevel.HIGH)
    med = sum(1 for c in codes if c == RiskLevel.MEDIUM)
    low = sum(1 for c in codes if c == RiskLevel.LOW)
    return high, med, low


def _crv(high: int, med: int, low: int) -> float:
    total = high + med + low
    if total == 0:
        return 1.0
    return (3 * high + 2 * med + 1 * low) / total


def summarize_clusters(
    assignment: ClusterAssignment, vectors: Sequence[FeatureVector]
) -> list[ClusterRiskSummary]:
    """Per-cluster counts of present-feature risk codes, the cluster risk
    value and its mapped level. Noise (-1) is summarized too."""
    out = []
    for index in assignment.cluster_indices():
        member_codes: list[int] = []
        count = 0
        for label, vec in zip(assignment.labels, vectors):
            if int(label) != index:
                continue
            count += 1
            member_codes.extend(vec.present_codes())
        high, med, low = _risk_counts(member_codes)
        crv = _crv(high, med, low)
        out.append(
            ClusterRiskSummary(index, high, med, low, crv, crv_to_level(crv), count)
        )
    return out


def dataset_risk(vectors: Sequence[FeatureVector]) -> tuple[float, str]:
    """The cluster risk formula applied to the whole sample set."""
    if not vectors:
        raise EmptyInput("dataset risk requires at least one sample")
    codes: list[int] = []
    for vec in vectors:
        codes.extend(vec.present_codes())
    high, med, low = _risk_counts(codes)
    crv = _crv(high, med, low)
    return crv, crv_to_level(crv)


class Decision(enum.Enum):
    PERMIT = "permit"
    DENY = "deny"
    ESCALATE = "escalate"


def decide_cluster(level: str, codes: Sequence[int], outlier: bool) -> Decision:
    """Permit/deny rule over the cluster level. High clusters deny,
    medium clusters fall back to the sample's own feature codes, noise
    escalates to a human."""
    if outlier:
        return Decision.ESCALATE
    if level in ("H", "HM"):
        return Decision.DENY
    if level in ("MH", "M"):
        return (
            Decision.DENY
            if any(c == RiskLevel.HIGH for c in codes)
            else Decision.PERMIT
        )
    return Decision.PERMIT


def decide_samples(
    assignment: ClusterAssignment,
    summaries: Sequence[ClusterRiskSummary],
    vectors: Sequence[FeatureVector],
) -> list[Decision]:
    levels = {s.index: s.level for s in summaries}
    out = []
    for label, vec in zip(assignment.labels, vectors):
        label = int(label)
        out.append(
            decide_cluster(
                levels.get(label, "H"),
                vec.present_codes(),
                outlier=label == -1,
            )
        )
    return out
