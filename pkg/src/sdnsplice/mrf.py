"""Binary MAP-MRF labelling on the block lattice.

Energy of a labelling ``f`` given tamper probabilities ``p``::

    E(f) = sum_i -log p(d_i | f_i) + alpha * sum_i f_i + sum_{i~j} beta_ij |f_i - f_j|

with ``p(d|0) = 1 - p`` and ``p(d|1) = p`` and the 4-neighbourhood pairwise
weights ``beta_ij = beta0 + beta1 * exp(-|d_i - d_j|^2 / (2 phi^2))`` over
mean block colours on the 0..255 scale.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .blocks import BlockGrid
from .errors import DomainError, ShapeError
from .maxflow import EPS, FlowGraph

P_FLOOR = 1e-4
ALPHA_GRID = tuple(float(a) for a in np.geomspace(0.1, 3.0, 12))
BETA0_GRID = tuple(float(b) for b in np.linspace(0.0, 1.0, 11))
BETA1_GRID = tuple(float(b) for b in np.linspace(0.0, 2.0, 9))


@dataclass(frozen=True)
class MrfParams:
    alpha: float = 1.0
    beta0: float = 0.5
    beta1: float = 1.0
    phi: float = 25.0

    def __post_init__(self):
        if min(self.alpha, self.beta0, self.beta1) < 0:
            raise DomainError("MRF parameters must be non-negative")
        if not self.phi > 0:
            raise DomainError("phi must be positive")

    def as_dict(self):
        return {"alpha": self.alpha, "beta0": self.beta0, "beta1": self.beta1, "phi": self.phi}


@dataclass
class EdgeWeights:
    """Per-edge values: ``horizontal[r, c]`` joins (r, c)-(r, c+1), ``vertical[r, c]`` joins (r, c)-(r+1, c)."""

    horizontal: np.ndarray
    vertical: np.ndarray

    @property
    def shape(self):
        return (self.vertical.shape[0] + 1, self.horizontal.shape[1] + 1)

    def scaled(self, beta0, beta1):
        return EdgeWeights(beta0 + beta1 * self.horizontal, beta0 + beta1 * self.vertical)

    def edge_count(self):
        return self.horizontal.size + self.vertical.size


@dataclass
class LabelField:
    grid: BlockGrid
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels).astype(np.uint8)
        if self.labels.shape != self.grid.shape:
            raise ShapeError("label field does not match its grid")
        if np.any(self.labels > 1):
            raise DomainError("labels must be binary")

    def to_pixels(self):
        return self.grid.upsample(self.labels.astype(bool), fill=False)


@dataclass
class EnergyBreakdown:
    likelihood_energy: float
    unary_penalty: float
    pairwise_penalty: float
    total: float

    def as_dict(self):
        return {"likelihood_energy": self.likelihood_energy, "unary_penalty": self.unary_penalty,
                "pairwise_penalty": self.pairwise_penalty, "total": self.total}


def block_colors(image, grid):
    """Mean colour of every block on the 0..255 scale, shape ``(rows, cols, 3)``."""
    image = np.asarray(image, dtype=float)
    if image.ndim == 2:
        image = image[..., None]
    B = grid.block_size
    crop = image[: grid.rows * B, : grid.cols * B]
    means = crop.reshape(grid.rows, B, grid.cols, B, -1).mean(axis=(1, 3)) * 255.0
    if means.shape[-1] == 1:
        means = np.repeat(means, 3, axis=-1)
    return means[..., :3]


def edge_similarity(image, grid, phi=25.0):
    """``exp(-|d_i - d_j|^2 / (2 phi^2))`` for each 4-neighbour edge."""
    d = block_colors(image, grid)
    dh = np.sum((d[:, 1:] - d[:, :-1]) ** 2, axis=-1)
    dv = np.sum((d[1:, :] - d[:-1, :]) ** 2, axis=-1)
    return EdgeWeights(np.exp(-dh / (2 * phi ** 2)), np.exp(-dv / (2 * phi ** 2)))


def pairwise_weights(image, grid, params):
    return edge_similarity(image, grid, params.phi).scaled(params.beta0, params.beta1)


def _probs(probs, p_floor=P_FLOOR):
    p = probs.p if hasattr(probs, "p") else np.asarray(probs, dtype=float)
    return np.clip(p, p_floor, 1.0 - p_floor)


def unary_costs(probs, params, p_floor=P_FLOOR):
    """Costs ``(D0, D1)`` of labels 0 and 1 including the single-site penalty."""
    p = _probs(probs, p_floor)
    return -np.log1p(-p), -np.log(p) + params.alpha


def _labels(labels):
    return np.asarray(labels.labels if hasattr(labels, "labels") else labels)


def energy(labels, probs, weights, params, p_floor=P_FLOOR):
    f = _labels(labels).astype(float)
    p = _probs(probs, p_floor)
    if f.shape != p.shape or weights.shape != p.shape:
        raise ShapeError("labels, probabilities and edge weights disagree in shape")
    like = float(np.sum(np.where(f > 0, -np.log(p), -np.log1p(-p))))
    unary = float(params.alpha * f.sum())
    pair = float(np.sum(weights.horizontal * np.abs(f[:, 1:] - f[:, :-1]))
                 + np.sum(weights.vertical * np.abs(f[1:, :] - f[:-1, :])))
    return EnergyBreakdown(like, unary, pair, like + unary + pair)


def _check_weights(weights):
    if np.any(weights.horizontal < 0) or np.any(weights.vertical < 0):
        raise DomainError("negative pairwise weight; energy is not submodular")


def min_cut_labels(probs, weights, params, grid=None, p_floor=P_FLOOR):
    """Exact minimiser of the energy via an s-t minimum cut.

    Source side means label 0. Among optimal labellings the one with the
    fewest 1-labels reachable from the sink is returned, so ties go to 0.
    """
    grid = grid if grid is not None else probs.grid
    D0, D1 = unary_costs(probs, params, p_floor)
    if weights.shape != D0.shape:
        raise ShapeError("edge weights do not match the probability map")
    _check_weights(weights)
    R, C = D0.shape
    n = R * C
    s, t = n, n + 1
    g = FlowGraph(n + 2)
    base = np.minimum(D0, D1)
    to_sink = (D0 - base).ravel()
    from_source = (D1 - base).ravel()
    for i in range(n):
        if from_source[i] > 0:
            g.add_edge(s, i, from_source[i])
        if to_sink[i] > 0:
            g.add_edge(i, t, to_sink[i])
    idx = np.arange(n).reshape(R, C)
    for (a, b, w) in ((idx[:, :-1], idx[:, 1:], weights.horizontal),
                      (idx[:-1, :], idx[1:, :], weights.vertical)):
        for u, v, c in zip(a.ravel(), b.ravel(), w.ravel()):
            if c > 0:
                g.add_edge(int(u), int(v), c, c)
    g.max_flow(s, t, EPS)
    labels = g.sink_side(t, EPS)[:n].reshape(R, C)
    return LabelField(grid, labels)


@dataclass
class LbpResult:
    marginals: np.ndarray
    converged: bool
    sweeps: int
    residual: float


def lbp_marginals(probs, weights, params, max_sweeps=100, tol=1e-6, damping=0.5,
                  p_floor=P_FLOOR):
    """Sum-product loopy belief propagation; returns approximate ``P(f_i = 1)``.

    Messages are updated in parallel (flooding) and damped in the
    probability domain.
    """
    if max_sweeps < 1:
        raise DomainError("max_sweeps must be >= 1")
    _check_weights(weights)
    D0, D1 = unary_costs(probs, params, p_floor)
    unary = np.stack([-D0, -D1], axis=-1)
    R, C = D0.shape
    wh, wv = weights.horizontal, weights.vertical
    # incoming log-messages, normalised so that logsumexp over labels is 0
    uniform = np.full((R, C, 2), -np.log(2.0))
    left, right, up, down = (uniform.copy() for _ in range(4))

    def send(h, beta):
        # h: (..., 2) log-potential at the sender; returns message over receiver labels
        same = h
        flip = h[..., ::-1] - beta[..., None]
        msg = np.logaddexp(same, flip)
        return msg - logsumexp(msg, axis=-1, keepdims=True)

    def damp(old, new):
        mixed = np.log(damping * np.exp(old) + (1.0 - damping) * np.exp(new))
        return mixed - logsumexp(mixed, axis=-1, keepdims=True)

    residual = np.inf
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        belief = unary + left + right + up + down
        new_left, new_right = left.copy(), right.copy()
        new_up, new_down = up.copy(), down.copy()
        if C > 1:
            new_left[:, 1:] = send((belief - right)[:, :-1], wh)
            new_right[:, :-1] = send((belief - left)[:, 1:], wh)
        if R > 1:
            new_up[1:, :] = send((belief - down)[:-1, :], wv)
            new_down[:-1, :] = send((belief - up)[1:, :], wv)
        residual = 0.0
        updated = []
        for old, new in ((left, new_left), (right, new_right), (up, new_up), (down, new_down)):
            new = damp(old, new)
            residual = max(residual, float(np.max(np.abs(np.exp(new) - np.exp(old)))))
            updated.append(new)
        left, right, up, down = updated
        if residual < tol:
            break
    belief = unary + left + right + up + down
    belief = belief - logsumexp(belief, axis=-1, keepdims=True)
    return LbpResult(np.exp(belief[..., 1]), residual < tol, sweeps, residual)


def _neighbour_sums(f, sim):
    """Per node: degree, labelled-1 neighbours, total similarity and similarity to 1-labels."""
    R, C = f.shape
    deg = np.zeros((R, C))
    ones = np.zeros((R, C))
    stot = np.zeros((R, C))
    sone = np.zeros((R, C))
    pairs = (((slice(None), slice(None, -1)), (slice(None), slice(1, None)), sim.horizontal),
             ((slice(None, -1), slice(None)), (slice(1, None), slice(None)), sim.vertical))
    for a, b, w in pairs:
        deg[a] += 1
        deg[b] += 1
        ones[a] += f[b]
        ones[b] += f[a]
        stot[a] += w
        stot[b] += w
        sone[a] += w * f[b]
        sone[b] += w * f[a]
    return deg, ones, stot, sone


def pseudo_log_likelihood(labels, probs, sim, alphas, beta0s, beta1s, p_floor=P_FLOOR):
    """Log pseudo-likelihood of ``labels`` under ``exp(-E)`` for each parameter triple.

    ``alphas``, ``beta0s`` and ``beta1s`` broadcast against each other; the
    result has their broadcast shape.
    """
    f = _labels(labels).astype(float)
    p = _probs(probs, p_floor)
    deg, ones, stot, sone = _neighbour_sums(f, sim)
    sign = 1.0 - 2.0 * f  # +1 when flipping 0 -> 1
    # energy change when node i flips away from its current label
    data = sign * (np.log1p(-p) - np.log(p))
    d_count = sign * (deg - 2.0 * ones)
    d_sim = sign * (stot - 2.0 * sone)
    a = np.asarray(alphas, dtype=float)[..., None]
    b0 = np.asarray(beta0s, dtype=float)[..., None]
    b1 = np.asarray(beta1s, dtype=float)[..., None]
    delta = (data.ravel() + a * sign.ravel() + b0 * d_count.ravel() + b1 * d_sim.ravel())
    return -np.sum(np.logaddexp(0.0, -delta), axis=-1)


@dataclass
class ParamEstimate:
    params: MrfParams
    labels: LabelField
    trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def estimate_params(probs, image, init_labels, iter_max=5, phi=25.0,
                    alphas=ALPHA_GRID, beta0s=BETA0_GRID, beta1s=BETA1_GRID, p_floor=P_FLOOR):
    """Alternate parameter selection and exact inference.

    Each round picks ``(alpha, beta0, beta1)`` from the grids maximising the
    pseudo-likelihood of the current labelling, then relabels by minimum
    cut under those parameters. Stops when the labelling repeats or after
    ``iter_max`` rounds. Every trace entry records the energy before and
    after the relabelling at fixed parameters.
    """
    grid = probs.grid
    sim = edge_similarity(image, grid, phi)
    A, B0, B1 = np.meshgrid(alphas, beta0s, beta1s, indexing="ij")
    f = LabelField(grid, _labels(init_labels))
    params = None
    trace = []
    converged = False
    for it in range(1, iter_max + 1):
        score = pseudo_log_likelihood(f, probs, sim, A.ravel(), B0.ravel(), B1.ravel(), p_floor)
        best = int(np.argmax(score))
        params = MrfParams(float(A.ravel()[best]), float(B0.ravel()[best]),
                           float(B1.ravel()[best]), phi)
        weights = sim.scaled(params.beta0, params.beta1)
        before = energy(f, probs, weights, params, p_floor)
        new = min_cut_labels(probs, weights, params, grid, p_floor)
        after = energy(new, probs, weights, params, p_floor)
        trace.append({"iteration": it, "params": params.as_dict(),
                      "pseudo_log_likelihood": float(score[best]),
                      "energy_before": before.as_dict(), "energy_after": after.as_dict(),
                      "changed": int(np.sum(new.labels != f.labels))})
        same = np.array_equal(new.labels, f.labels)
        f = new
        if same:
            converged = True
            break
    return ParamEstimate(params, f, trace, len(trace), converged)
