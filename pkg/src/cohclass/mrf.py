"""Binary label fields from coherence maps via exact MRF minimization.

A coherence map is thresholded into initial labels P, then the energy

    E(S) = sum_ij |P_ij - S_ij| + alpha * sum_{4-neighbor pairs} |S_ij - S_kl|

is minimized exactly over binary fields S with an s-t min-cut: t-link
capacities P_i (source) and 1 - P_i (sink), n-link capacity alpha in both
directions between 4-neighbors. Nodes reachable from the source in the
residual graph are labeled 1, which resolves ties toward the labeling
with the fewest 1s.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, maximum_flow

from .errors import DegenerateInputError, ParameterError, ShapeError

OTSU_BINS = 256

# Defaults for preparing training labels: the fixed initialization
# threshold and the smoothness weight that cleans isolated errors without
# erasing real region boundaries.
DEFAULT_INIT_THRESHOLD = 0.6
DEFAULT_ALPHA = 2.5

_BRUTE_FORCE_LIMIT = 20
_INT32_MAX = 2**31 - 1


@dataclass(frozen=True)
class MrfConfig:
    """Smoothness weight and initialization threshold; 4-connected grid."""

    alpha: float = DEFAULT_ALPHA
    init_threshold: float = DEFAULT_INIT_THRESHOLD

    def __post_init__(self):
        if self.alpha < 0:
            raise ParameterError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 <= self.init_threshold <= 1.0:
            raise ParameterError(
                f"init_threshold must lie in [0, 1], got {self.init_threshold}"
            )


def otsu_threshold(values) -> float:
    """Histogram threshold maximizing between-class variance.

    Uses a fixed 256-bin histogram over [0, 1] and returns a bin edge.
    When several splits tie (flat variance between two well separated
    modes), the midpoint of the tied range is returned, rounded down to
    a bin edge.
    """
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ParameterError("empty input")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ParameterError("values must lie in [0, 1]")
    if np.all(arr == arr.flat[0]):
        raise DegenerateInputError("constant input has no threshold")

    hist, edges = np.histogram(arr, bins=OTSU_BINS, range=(0.0, 1.0))
    p = hist / hist.sum()
    centers = (edges[:-1] + edges[1:]) / 2.0
    omega = np.cumsum(p)
    mu = np.cumsum(p * centers)
    mu_total = mu[-1]

    # Split before bin k: class 0 holds bins [0, k), class 1 the rest.
    w0 = omega[:-1]
    m0 = mu[:-1]
    valid = (w0 > 0.0) & (w0 < 1.0)
    sigma_b = np.full(OTSU_BINS - 1, -np.inf)
    sigma_b[valid] = (mu_total * w0[valid] - m0[valid]) ** 2 / (
        w0[valid] * (1.0 - w0[valid])
    )
    best = sigma_b.max()
    tied = np.nonzero(sigma_b == best)[0] + 1  # edge indices
    k = int(np.floor(tied.mean()))
    return float(edges[k])


def initialize_labels(coherence, threshold: float) -> np.ndarray:
    """Pixels strictly above the threshold become 1, the rest 0."""
    if not 0.0 <= threshold <= 1.0:
        raise ParameterError(f"threshold must lie in [0, 1], got {threshold}")
    coh = np.asarray(coherence)
    if coh.ndim != 2 or coh.size == 0:
        raise ShapeError(f"expected a non-empty 2D map, got shape {coh.shape}")
    return (coh > threshold).astype(np.uint8)


def _check_binary_field(labels, name) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 2 or arr.size == 0:
        raise ShapeError(f"{name} must be a non-empty 2D field, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ParameterError(f"{name} must contain only 0/1 labels")
    return arr.astype(np.uint8)


def mrf_energy(initial, solution, alpha: float) -> float:
    """Disagreements with the initialization plus alpha per unequal
    4-neighbor pair (each unordered pair counted once)."""
    p = _check_binary_field(initial, "initial")
    s = _check_binary_field(solution, "solution")
    if p.shape != s.shape:
        raise ShapeError(f"dimension mismatch: {p.shape} vs {s.shape}")
    if alpha < 0:
        raise ParameterError(f"alpha must be >= 0, got {alpha}")
    data = int(np.count_nonzero(p != s))
    pairs = int(np.count_nonzero(s[1:, :] != s[:-1, :]))
    pairs += int(np.count_nonzero(s[:, 1:] != s[:, :-1]))
    return float(data + alpha * pairs)


def _capacity_scale(alpha: float, n_pixels: int) -> int:
    """Integer scale for min-cut capacities.

    Every float is a dyadic rational, so small denominators (0.5, 2.5, ...)
    scale exactly. Otherwise alpha is quantized to 1/1024, and the scale is
    capped so the total flow stays inside int32.
    """
    limit = max(1, _INT32_MAX // (n_pixels + 1))
    denom = Fraction(alpha).denominator if alpha > 0 else 1
    scale = denom if denom <= 1024 else 1024
    scale = min(scale, limit)
    if alpha > 0:
        scale = min(scale, max(1, int(_INT32_MAX / max(alpha, 1.0))))
    return max(1, scale)


def minimize_mrf(initial, alpha: float) -> np.ndarray:
    """Global minimizer of the label-field energy via s-t min-cut."""
    p = _check_binary_field(initial, "initial")
    if alpha < 0:
        raise ParameterError(f"alpha must be >= 0, got {alpha}")
    h, w = p.shape
    n = h * w
    flat = p.ravel().astype(np.int64)
    source, sink = n, n + 1

    scale = _capacity_scale(alpha, n)
    n_cap = int(round(alpha * scale))

    rows = []
    cols = []
    caps = []

    ones = np.nonzero(flat == 1)[0]
    zeros = np.nonzero(flat == 0)[0]
    rows.append(np.full(ones.size, source, dtype=np.int64))
    cols.append(ones)
    caps.append(np.full(ones.size, scale, dtype=np.int32))
    rows.append(zeros)
    cols.append(np.full(zeros.size, sink, dtype=np.int64))
    caps.append(np.full(zeros.size, scale, dtype=np.int32))

    if n_cap > 0:
        idx = np.arange(n, dtype=np.int64).reshape(h, w)
        horiz = (idx[:, :-1].ravel(), idx[:, 1:].ravel())
        vert = (idx[:-1, :].ravel(), idx[1:, :].ravel())
        for a_idx, b_idx in (horiz, vert):
            rows.extend([a_idx, b_idx])
            cols.extend([b_idx, a_idx])
            caps.append(np.full(a_idx.size, n_cap, dtype=np.int32))
            caps.append(np.full(a_idx.size, n_cap, dtype=np.int32))

    graph = csr_matrix(
        (np.concatenate(caps), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n + 2, n + 2),
        dtype=np.int32,
    )
    result = maximum_flow(graph, source, sink, method="dinic")

    residual = (graph - result.flow).tocsr()
    residual.data = (residual.data > 0).astype(np.int32)
    residual.eliminate_zeros()
    reached = breadth_first_order(
        residual, source, directed=True, return_predecessors=False
    )
    labels = np.zeros(n, dtype=np.uint8)
    labels[reached[reached < n]] = 1
    return labels.reshape(h, w)


def brute_force_mrf(initial, alpha: float) -> np.ndarray:
    """Exhaustive minimizer for small fields; oracle for minimize_mrf.

    Ties resolve to the lexicographically smallest labeling in row-major
    order. Refuses fields larger than 20 pixels.
    """
    p = _check_binary_field(initial, "initial")
    if alpha < 0:
        raise ParameterError(f"alpha must be >= 0, got {alpha}")
    h, w = p.shape
    n = h * w
    if n > _BRUTE_FORCE_LIMIT:
        raise ParameterError(f"field has {n} pixels, enumeration limit is {_BRUTE_FORCE_LIMIT}")

    # Pixel k (row-major) occupies bit n-1-k, so integer order over masks
    # equals lexicographic order over labelings.
    bit = n - 1 - np.arange(n)
    flat = p.ravel().astype(np.uint64)
    p_mask = np.uint64(np.sum(flat << bit.astype(np.uint64)))

    masks = np.arange(2**n, dtype=np.uint64)
    energy = np.bitwise_count(masks ^ p_mask).astype(np.float64)

    idx = np.arange(n).reshape(h, w)
    pairs = np.concatenate(
        [
            np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1),
            np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1),
        ]
    )
    for a_pix, b_pix in pairs:
        diff = ((masks >> np.uint64(bit[a_pix])) ^ (masks >> np.uint64(bit[b_pix]))) & np.uint64(1)
        energy += alpha * diff

    best = int(np.argmin(energy))  # first minimum = lexicographically smallest
    labels = (best >> bit) & 1
    return labels.astype(np.uint8).reshape(h, w)
