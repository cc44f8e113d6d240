"""Channel charting: ISOMAP over a phase-insensitive channel distance.

The chart is built once from a calibration set of vectorized uplink
channels. New channels are embedded without re-running ISOMAP, as a convex
combination of calibration pseudo-locations weighted by inverse channel
distance; this is the fast out-of-sample path used at inference time.

Chart quality is summarized by trustworthiness / continuity (rank-based,
optimal at 1) and Kruskal stress (scale-invariant residual, optimal at 0).
"""

import struct
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import as_complex_matrix, as_real_matrix, check_nonzero_rows

OOS_EPSILON = 1e-9

_MAGIC = b"CBCH"
_VERSION = 1
_HEADER = struct.Struct("<4sH3I")
_DIMS = struct.Struct("<2I")


def channel_distance(h1, h2):
    """Phase- and scale-insensitive distance between two channel vectors.

    Returns sqrt(1 - |h1^H h2|^2 / (||h1||^2 ||h2||^2)), the sine of the
    principal angle between the two channel rays: 0 iff the inputs are equal
    up to a complex scale, 1 if they are orthogonal.
    """
    h1 = np.asarray(h1, dtype=np.complex128).ravel()
    h2 = np.asarray(h2, dtype=np.complex128).ravel()
    if h1.shape != h2.shape:
        raise ValueError("channel vectors must have equal length")
    n1 = np.vdot(h1, h1).real
    n2 = np.vdot(h2, h2).real
    if n1 == 0.0 or n2 == 0.0:
        raise ValueError("channel vectors must be non-zero")
    rho = np.abs(np.vdot(h1, h2)) ** 2 / (n1 * n2)
    return float(np.sqrt(np.clip(1.0 - rho, 0.0, 1.0)))


def pairwise_channel_distances(channels):
    """Dense matrix of channel_distance over all row pairs of (n, D) input."""
    x = as_complex_matrix(channels, "channels")
    norms2 = check_nonzero_rows(x, "channels") ** 2
    gram = np.abs(x.conj() @ x.T) ** 2
    rho = gram / np.outer(norms2, norms2)
    d = np.sqrt(np.clip(1.0 - rho, 0.0, 1.0))
    np.fill_diagonal(d, 0.0)
    return d


def cross_channel_distances(queries, references):
    """channel_distance between every query row and every reference row."""
    q = as_complex_matrix(queries, "queries")
    r = as_complex_matrix(references, "references")
    if q.shape[1] != r.shape[1]:
        raise ValueError("query and reference channel lengths differ")
    qn2 = check_nonzero_rows(q, "queries") ** 2
    rn2 = check_nonzero_rows(r, "references") ** 2
    rho = np.abs(q.conj() @ r.T) ** 2 / np.outer(qn2, rn2)
    return np.sqrt(np.clip(1.0 - rho, 0.0, 1.0))


def _knn_graph(dist, n_neighbors):
    """Symmetric k-NN graph (union rule), repaired to a single connected
    component by adding shortest inter-component edges."""
    n = dist.shape[0]
    d = dist.copy()
    np.fill_diagonal(d, -1.0)  # self sorts first even next to exact duplicates
    order = np.argsort(d, axis=1, kind="stable")[:, 1 : n_neighbors + 1]
    rows = np.repeat(np.arange(n), n_neighbors)
    cols = order.ravel()
    # zero-distance duplicates must keep their edge in the sparse graph
    weights = np.maximum(dist[rows, cols], 1e-300)

    extra_rows, extra_cols, extra_w = [], [], []
    graph = csr_matrix((weights, (rows, cols)), shape=(n, n))
    graph = graph.maximum(graph.T)
    n_comp, labels = connected_components(graph, directed=False)
    if n_comp > 1:
        warnings.warn(
            f"k-NN graph has {n_comp} components; repairing with shortest bridging edges",
            stacklevel=3,
        )
    while n_comp > 1:
        cross = np.where(labels[:, None] != labels[None, :], dist, np.inf)
        i, j = np.unravel_index(np.argmin(cross), cross.shape)
        extra_rows += [i, j]
        extra_cols += [j, i]
        extra_w += [max(dist[i, j], 1e-300)] * 2
        labels[labels == labels[j]] = labels[i]
        n_comp -= 1
    if extra_rows:
        bridge = csr_matrix((extra_w, (extra_rows, extra_cols)), shape=(n, n))
        graph = graph.maximum(bridge)
    return graph


def geodesic_distances(dist, n_neighbors):
    """All-pairs shortest-path distances over the symmetric k-NN graph,
    one Dijkstra run per source."""
    graph = _knn_graph(dist, n_neighbors)
    return shortest_path(graph, method="D", directed=False)


def classical_mds(dist, n_components):
    """Classical MDS: double-center squared distances, take the top
    eigenpairs. Exact on Euclidean distance data; output has zero mean per
    dimension."""
    d2 = np.asarray(dist, dtype=np.float64) ** 2
    row = d2.mean(axis=1, keepdims=True)
    col = d2.mean(axis=0, keepdims=True)
    gram = -0.5 * (d2 - row - col + d2.mean())
    gram = 0.5 * (gram + gram.T)
    eigvals, eigvecs = np.linalg.eigh(gram)
    top = np.argsort(eigvals)[::-1][:n_components]
    lam = np.clip(eigvals[top], 0.0, None)
    return eigvecs[:, top] * np.sqrt(lam)[None, :]


class ChannelCharter(BaseEstimator, TransformerMixin):
    """ISOMAP channel charting with a fast out-of-sample extension.

    Parameters
    ----------
    n_neighbors : int, default=15
        Neighborhood size of the k-NN graph used for geodesic distances.
    n_components : int, default=2
        Chart dimension d (1 to 3).
    oos_neighbors : int or None, default=None
        Calibration points combined in the out-of-sample embedding;
        None selects 3 * n_components.
    metric : {'channel', 'precomputed'}, default='channel'
        'channel' expects complex channel rows and uses the
        phase-insensitive distance; 'precomputed' expects a distance
        matrix in ``fit`` (and query-to-calibration distances in
        ``transform``).

    Attributes
    ----------
    cal_channels_ : ndarray of shape (n_cal, D), complex64
        Calibration channels (metric='channel' only).
    embedding_ : ndarray of shape (n_cal, n_components)
        Calibration pseudo-locations, zero mean per dimension. Axis signs
        and orientation are arbitrary; consumers must not rely on them.
    """

    def __init__(self, n_neighbors=15, n_components=2, oos_neighbors=None, metric="channel"):
        self.n_neighbors = n_neighbors
        self.n_components = n_components
        self.oos_neighbors = oos_neighbors
        self.metric = metric

    def _check_params(self, n_cal):
        if self.n_neighbors < 2:
            raise ValueError("n_neighbors must be >= 2")
        if not 1 <= self.n_components <= 3:
            raise ValueError("n_components must be between 1 and 3")
        if n_cal <= self.n_neighbors:
            raise ValueError(
                f"need more than n_neighbors={self.n_neighbors} calibration points, got {n_cal}"
            )
        oos = self.oos_neighbors if self.oos_neighbors is not None else 3 * self.n_components
        if oos < self.n_components + 1:
            raise ValueError("oos_neighbors must be at least n_components + 1")
        return min(oos, n_cal)

    def fit(self, X, y=None):
        if self.metric == "precomputed":
            dist = as_real_matrix(X, "X")
            if dist.shape[0] != dist.shape[1]:
                raise ValueError("precomputed distance matrix must be square")
            self.cal_channels_ = None
        elif self.metric == "channel":
            channels = as_complex_matrix(X, "X")
            dist = pairwise_channel_distances(channels)
            self.cal_channels_ = channels.astype(np.complex64)
        else:
            raise ValueError(f"unknown metric {self.metric!r}")
        if np.max(dist) == 0.0:
            raise ValueError("all calibration channels are identical (zero distance matrix)")

        self._oos_neighbors_ = self._check_params(dist.shape[0])
        geo = geodesic_distances(dist, self.n_neighbors)
        self.embedding_ = classical_mds(geo, self.n_components)
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X).embedding_

    def transform(self, X):
        """Out-of-sample embedding: inverse-distance convex combination of
        the nearest calibration pseudo-locations."""
        if not hasattr(self, "embedding_"):
            raise RuntimeError("chart is not fitted")
        if self.metric == "precomputed":
            dist = as_real_matrix(X, "X")
            if dist.shape[1] != self.embedding_.shape[0]:
                raise ValueError("distance rows must match the calibration set size")
        else:
            dist = cross_channel_distances(X, self.cal_channels_)

        k = self._oos_neighbors_
        nn = np.argsort(dist, axis=1, kind="stable")[:, :k]
        rows = np.arange(dist.shape[0])[:, None]
        w = 1.0 / (dist[rows, nn] + OOS_EPSILON)
        w /= w.sum(axis=1, keepdims=True)
        return np.einsum("qk,qkd->qd", w, self.embedding_[nn])


def build_chart(cal_channels, n_neighbors=15, n_components=2, oos_neighbors=None):
    """Fit a ChannelCharter on vectorized calibration channels."""
    return ChannelCharter(
        n_neighbors=n_neighbors, n_components=n_components, oos_neighbors=oos_neighbors
    ).fit(cal_channels)


def embed(chart, h_new):
    """Pseudo-location of a single new channel vector."""
    h = np.asarray(h_new).reshape(1, -1)
    return chart.transform(h)[0]


@dataclass(frozen=True)
class ChartQuality:
    trustworthiness: float
    continuity: float
    kruskal_stress: float
    neighborhood_fraction: float


def _neighbor_ranks(points):
    """0-based rank of every other point by distance, per row; self excluded."""
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=-1))
    np.fill_diagonal(dist, -1.0)
    order = np.argsort(dist, axis=1, kind="stable")[:, 1:]
    n = points.shape[0]
    ranks = np.empty((n, n), dtype=np.int64)
    rows = np.arange(n)[:, None]
    ranks[rows, order] = np.arange(n - 1)[None, :]
    np.fill_diagonal(ranks, n)  # sentinel, never selected
    np.fill_diagonal(dist, 0.0)
    return dist, ranks


def _rank_penalty(ranks_kept, ranks_lost, k):
    """Sum of (rank - k) over points inside one neighborhood but outside
    the other, using 1-based ranks."""
    mask = (ranks_kept < k) & (ranks_lost >= k)
    return np.sum(ranks_lost[mask] + 1 - k)


def chart_quality(true_positions, embedding, neighborhood_fraction=0.05):
    """Trustworthiness, continuity and Kruskal stress of an embedding
    against ground-truth positions, with K = round(fraction * N) neighbors."""
    pos = as_real_matrix(true_positions, "true_positions")
    emb = as_real_matrix(embedding, "embedding")
    n = pos.shape[0]
    if emb.shape[0] != n:
        raise ValueError("position and embedding counts differ")
    if n < 10:
        raise ValueError("need at least 10 points")
    if not 0.0 < neighborhood_fraction < 1.0:
        raise ValueError("neighborhood_fraction must lie in (0, 1)")
    k = int(round(neighborhood_fraction * n))
    if k < 1 or k > (n - 1) / 2:
        raise ValueError(f"neighborhood size K={k} invalid for N={n}")

    d_true, r_true = _neighbor_ranks(pos)
    d_emb, r_emb = _neighbor_ranks(emb)

    norm = 2.0 / (n * k * (2 * n - 3 * k - 1))
    tw = 1.0 - norm * _rank_penalty(r_emb, r_true, k)
    ct = 1.0 - norm * _rank_penalty(r_true, r_emb, k)

    iu = np.triu_indices(n, k=1)
    d, d_hat = d_true[iu], d_emb[iu]
    denom = np.sum(d_hat**2)
    beta = np.sum(d * d_hat) / denom if denom > 0.0 else 0.0
    ks = float(np.sqrt(np.sum((beta * d_hat - d) ** 2) / np.sum(d**2)))

    return ChartQuality(
        trustworthiness=float(tw),
        continuity=float(ct),
        kruskal_stress=ks,
        neighborhood_fraction=neighborhood_fraction,
    )


def save_chart(chart, path):
    """Persist a fitted channel-metric chart in the CBCH layout."""
    if not hasattr(chart, "embedding_"):
        raise ValueError("chart is not fitted")
    if chart.cal_channels_ is None:
        raise ValueError("precomputed-metric charts carry no channels and cannot be saved")
    n_cal, dim = chart.cal_channels_.shape
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(_MAGIC, _VERSION, chart.n_neighbors, chart.n_components, chart._oos_neighbors_)
        )
        fh.write(_DIMS.pack(n_cal, dim))
        fh.write(chart.cal_channels_.astype("<c8").tobytes())
        fh.write(chart.embedding_.astype("<f8").tobytes())


def load_chart(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size + _DIMS.size or raw[:4] != _MAGIC:
        raise ValueError("not a CBCH chart file")
    _, version, n_neighbors, n_components, oos = _HEADER.unpack_from(raw, 0)
    if version != _VERSION:
        raise ValueError(f"unsupported CBCH version {version}")
    n_cal, dim = _DIMS.unpack_from(raw, _HEADER.size)
    off = _HEADER.size + _DIMS.size
    expected = off + 8 * n_cal * dim + 8 * n_cal * n_components
    if len(raw) != expected:
        raise ValueError("truncated CBCH payload")
    channels = np.frombuffer(raw, dtype="<c8", count=n_cal * dim, offset=off).reshape(n_cal, dim)
    off += 8 * n_cal * dim
    embedding = np.frombuffer(raw, dtype="<f8", count=n_cal * n_components, offset=off).reshape(
        n_cal, n_components
    )
    chart = ChannelCharter(n_neighbors=n_neighbors, n_components=n_components, oos_neighbors=oos)
    chart.cal_channels_ = channels.copy()
    chart.embedding_ = embedding.copy()
    chart._oos_neighbors_ = oos
    return chart
