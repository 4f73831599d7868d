"""Objective metrics for generated audio.

Reconstruction (spectrogram MSE/MAE, multi-scale spectral distance),
diversity (NDB/k, inception score), and distribution distance (KID, FAD).
Every function here is pure; independent metric jobs can run in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio import AudioClip, Spectrogram, StftParams, stft
from .errors import DataError

DEFAULT_MULTI_SCALE_SIZES = (2048, 1024, 512, 256, 128, 64)
MULTI_SCALE_LOG_EPS = 1e-7
DEFAULT_NDB_K = 50
DEFAULT_NDB_ALPHA = 0.05
PROB_ROW_TOL = 1e-6


# ---------------------------------------------------------------------------
# Containers


@dataclass(frozen=True)
class EmbeddingSet:
    """N x D matrix of per-clip embedding vectors."""

    vectors: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1:
            raise DataError("embeddings must form a non-empty N x D matrix")
        if not np.all(np.isfinite(v)):
            raise DataError("embeddings must be finite")
        object.__setattr__(self, "vectors", v)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class ProbabilityMatrix:
    """N x C row-stochastic matrix of class probabilities."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] < 2:
            raise DataError("probability matrix must be N x C with C >= 2")
        if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
            raise DataError("probabilities must lie in [0, 1]")
        sums = p.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > PROB_ROW_TOL)[0]
        if bad.size:
            raise DataError(f"row {bad[0]} not normalized (sums to {sums[bad[0]]:.8g})")
        object.__setattr__(self, "probs", p)


@dataclass(frozen=True)
class GaussianStats:
    """Mean and covariance fitted to an embedding set."""

    mean: np.ndarray
    covariance: np.ndarray
    count: int

    def __post_init__(self):
        mu = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.covariance, dtype=np.float64)
        if mu.ndim != 1 or cov.shape != (mu.size, mu.size):
            raise DataError("mean must be D-vector with D x D covariance")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(cov))):
            raise DataError("gaussian stats must be finite")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-9:
            raise DataError("covariance must be symmetric")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True)
class NdbModel:
    """k-means bins fitted on training samples, with their occupancy."""

    centroids: np.ndarray
    train_bin_proportions: np.ndarray
    train_count: int
    k: int
    alpha: float

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float64)
        p = np.asarray(self.train_bin_proportions, dtype=np.float64)
        if self.k < 1 or c.shape[0] != self.k:
            raise DataError("centroid count must equal k >= 1")
        if p.shape != (self.k,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise DataError("bin proportions must be non-negative and sum to 1")
        if not 0 < self.alpha < 1:
            raise DataError("alpha must lie in (0, 1)")
        object.__setattr__(self, "centroids", c)
        object.__setattr__(self, "train_bin_proportions", p)


# ---------------------------------------------------------------------------
# Reconstruction errors


def mse_mae(reference: Spectrogram, generated: Spectrogram) -> dict:
    """Mean squared / absolute error between two magnitude spectrograms."""
    a, b = reference.magnitudes, generated.magnitudes
    if a.shape != b.shape or reference.params != generated.params:
        raise DataError("spectrogram shape/parameter mismatch")
    diff = a - b
    return {"mse": float(np.mean(diff * diff)), "mae": float(np.mean(np.abs(diff)))}


def waveform_mse_mae(x: AudioClip, y: AudioClip) -> dict:
    """Time-domain variant of the reconstruction errors."""
    if len(x) != len(y):
        raise DataError("clip length mismatch")
    diff = x.samples - y.samples
    return {"mse": float(np.mean(diff * diff)), "mae": float(np.mean(np.abs(diff)))}


def multi_scale_distance(x: AudioClip, y: AudioClip,
                         fft_sizes=DEFAULT_MULTI_SCALE_SIZES) -> float:
    """Spectrogram distance summed over several FFT sizes.

    Per size (hop = fft_size/4, Hann window):
        mean |S_x - S_y|  +  mean |log(S_x + eps) - log(S_y + eps)|
    Zero exactly when the signals are identical.
    """
    if len(x) != len(y) or x.sample_rate != y.sample_rate:
        raise DataError("clips must have equal length and sample rate")
    sizes = list(fft_sizes)
    if not sizes:
        raise DataError("fft_sizes must be non-empty")
    total = 0.0
    for size in sizes:
        params = StftParams(fft_size=size, hop_size=size // 4, window="hann")
        sx = stft(x, params).magnitudes
        sy = stft(y, params).magnitudes
        lin = np.mean(np.abs(sx - sy))
        log = np.mean(np.abs(np.log(sx + MULTI_SCALE_LOG_EPS)
                             - np.log(sy + MULTI_SCALE_LOG_EPS)))
        total += float(lin + log)
    return total


# ---------------------------------------------------------------------------
# NDB/k


def _as_matrix(data) -> np.ndarray:
    if isinstance(data, EmbeddingSet):
        return data.vectors
    if isinstance(data, ProbabilityMatrix):
        return data.probs
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise DataError("expected an N x D sample matrix")
    if not np.all(np.isfinite(m)):
        raise DataError("samples must be finite")
    return m


def _nearest_centroid(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # ||p - c||^2 = ||p||^2 - 2 p.c + ||c||^2; ||p||^2 constant per row.
    d = (points @ centroids.T) * -2.0 + np.sum(centroids * centroids, axis=1)
    return np.argmin(d, axis=1)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            # Remaining mass is zero: every point coincides with a centroid.
            centroids[i] = points[rng.integers(n)]
            continue
        idx = rng.choice(n, p=d2 / total)
        centroids[i] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centroids[i]) ** 2, axis=1))
    return centroids


def fit_ndb(train, k: int = DEFAULT_NDB_K, alpha: float = DEFAULT_NDB_ALPHA,
            seed: int = 0, max_iter: int = 300, tol: float = 1e-6) -> NdbModel:
    """Fit the NDB bins: seeded k-means++ plus Lloyd iterations.

    Runs until the largest centroid shift drops below `tol` or `max_iter`
    iterations. Deterministic for a fixed seed.
    """
    points = _as_matrix(train)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise DataError(f"need N >= k >= 1 (got N={n}, k={k})")
    if not 0 < alpha < 1:
        raise DataError("alpha must lie in (0, 1)")
    if k > 1 and np.unique(points, axis=0).shape[0] < k:
        raise DataError("insufficient diversity: fewer distinct points than bins")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(points, k, rng)
    assign = _nearest_centroid(points, centroids)
    for _ in range(max_iter):
        new = centroids.copy()
        for j in range(k):
            members = points[assign == j]
            if members.shape[0]:
                new[j] = members.mean(axis=0)
            else:
                # Re-seed an empty bin on the point farthest from its centroid.
                far = np.argmax(np.sum((points - centroids[assign]) ** 2, axis=1))
                new[j] = points[far]
        shift = np.sqrt(np.sum((new - centroids) ** 2, axis=1)).max()
        centroids = new
        assign = _nearest_centroid(points, centroids)
        if shift < tol:
            break
    counts = np.bincount(assign, minlength=k).astype(np.float64)
    return NdbModel(centroids, counts / n, train_count=n, k=k, alpha=alpha)


def _two_proportion_p(p1: float, n1: int, p2: float, n2: int) -> float:
    pooled = (p1 * n1 + p2 * n2) / (n1 + n2)
    var = pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)
    if var <= 0.0:
        return 1.0  # both proportions are 0 or both are 1
    z = (p1 - p2) / math.sqrt(var)
    return math.erfc(abs(z) / math.sqrt(2.0))


def ndb_score(model: NdbModel, test) -> dict:
    """Count bins whose train/test occupancy differs significantly.

    Each test sample goes to its nearest centroid (L2); a two-proportion
    z-test per bin compares occupancy against the training proportions.
    """
    points = _as_matrix(test)
    if points.shape[1] != model.centroids.shape[1]:
        raise DataError("test dimensionality does not match the fitted bins")
    assign = _nearest_centroid(points, model.centroids)
    counts = np.bincount(assign, minlength=model.k).astype(np.float64)
    test_props = counts / points.shape[0]
    per_bin = []
    ndb = 0
    for j in range(model.k):
        p = _two_proportion_p(float(model.train_bin_proportions[j]), model.train_count,
                              float(test_props[j]), points.shape[0])
        different = p < model.alpha
        ndb += int(different)
        per_bin.append({"bin": j, "p_value": p, "different": different})
    return {"ndb": ndb, "ratio": ndb / model.k, "per_bin": per_bin}


# ---------------------------------------------------------------------------
# Inception score


def inception_score(probs: ProbabilityMatrix, splits: int = 1) -> float:
    """exp of the mean KL between each probability row and the marginal.

    Always >= 1 (KL is non-negative) and <= C. With splits > 1, the score
    is averaged over contiguous row splits.
    """
    p = probs.probs
    if splits < 1 or splits > p.shape[0]:
        raise DataError("splits must satisfy 1 <= splits <= N")
    scores = []
    for part in np.array_split(p, splits):
        marginal = part.mean(axis=0)
        # 0 * log(0/q) = 0 by convention.
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(part > 0, part * np.log(part / marginal), 0.0)
        scores.append(math.exp(float(terms.sum(axis=1).mean())))
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# KID


def _poly_kernel(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a @ b.T / a.shape[1] + 1.0) ** 3


def _mmd2_unbiased(x: np.ndarray, y: np.ndarray) -> float:
    n, m = x.shape[0], y.shape[0]
    kxx = _poly_kernel(x, x)
    kyy = _poly_kernel(y, y)
    kxy = _poly_kernel(x, y)
    sum_xx = (kxx.sum() - np.trace(kxx)) / (n * (n - 1))
    sum_yy = (kyy.sum() - np.trace(kyy)) / (m * (m - 1))
    return float(sum_xx + sum_yy - 2.0 * kxy.mean())


def kid(reference: EmbeddingSet, generated: EmbeddingSet,
        block_size: int = 0, repetitions: int = 1, seed: int = 0) -> float:
    """Unbiased squared MMD with the cubic polynomial kernel (x.y/D + 1)^3.

    The unbiased estimator can be slightly negative. By default the whole
    sets are compared; block_size > 0 averages the estimator over
    `repetitions` random same-size subsets instead.
    """
    if reference.n < 2 or generated.n < 2:
        raise DataError("KID needs at least 2 vectors per set")
    if reference.dim != generated.dim:
        raise DataError("embedding dimension mismatch")
    x, y = reference.vectors, generated.vectors
    if block_size <= 0:
        return _mmd2_unbiased(x, y)
    if block_size < 2 or block_size > min(len(x), len(y)):
        raise DataError("block_size must satisfy 2 <= block_size <= min(N)")
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(max(1, repetitions)):
        xi = x[rng.choice(len(x), block_size, replace=False)]
        yi = y[rng.choice(len(y), block_size, replace=False)]
        vals.append(_mmd2_unbiased(xi, yi))
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# FAD


def fit_gaussian(embeddings: EmbeddingSet) -> GaussianStats:
    """Column means and unbiased (N-1) sample covariance, symmetrized."""
    x = embeddings.vectors
    if x.shape[0] < 2:
        raise DataError("need at least 2 vectors to fit a gaussian")
    mu = x.mean(axis=0)
    centered = x - mu
    cov = centered.T @ centered / (x.shape[0] - 1)
    cov = (cov + cov.T) / 2.0
    return GaussianStats(mu, cov, count=x.shape[0])


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2).

    Matrix square roots go through symmetric eigendecompositions with
    negative eigenvalues clamped to zero; the result is clamped to >= 0.
    """
    if a.mean.shape != b.mean.shape:
        raise DataError("gaussian dimension mismatch")
    mu_diff = a.mean - b.mean
    root_a = _psd_sqrt(a.covariance)
    inner = root_a @ b.covariance @ root_a
    inner = (inner + inner.T) / 2.0
    cross = np.sum(np.sqrt(np.clip(np.linalg.eigvalsh(inner), 0.0, None)))
    trace_term = np.trace(a.covariance) + np.trace(b.covariance) - 2.0 * cross
    return float(max(0.0, mu_diff @ mu_diff + trace_term))


def fad(reference: EmbeddingSet, generated: EmbeddingSet) -> float:
    """Distance between gaussians fitted to the two embedding sets."""
    return frechet_distance(fit_gaussian(reference), fit_gaussian(generated))
