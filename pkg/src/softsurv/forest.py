"""Soft decision-tree ensembles over (time, covariates).

A tree routes an input probabilistically: at a branch on coordinate j with
cutpoint c and per-tree bandwidth a, the input goes right with probability
``gate(x_j, c, a) = 1 / (1 + exp(-(x_j - c)/a))`` and left with the
complement, so the leaf weights of any input are nonnegative and sum to one.
The ensemble value ``l(t, x)`` is the sum over trees of weight-averaged leaf
means.  Trees carry a branching-process prior (depth-k nodes split with
probability gamma*(1+k)**-beta) and are updated by marginal-likelihood
Metropolis-Hastings moves plus conjugate leaf redraws (Bayesian backfitting).

Inputs are pre-scaled to the unit cube by :class:`InputScaler`; coordinate 0
is time, coordinates 1..p the covariates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import expit

from .rng import RngStream

__all__ = [
    "ForestHyper",
    "SoftTree",
    "Forest",
    "InputScaler",
    "gate",
    "leaf_weights",
    "leaf_weight_matrix",
    "evaluate",
    "forest_values",
    "subject_evaluator",
    "sample_tree_prior",
    "sample_forest_prior",
    "tree_log_marginal",
    "backfit_sweep",
    "reset_visit_count",
    "visit_count",
]

# Structural proposal mix for the tree MCMC.
_P_GROW, _P_PRUNE, _P_CHANGE = 0.4, 0.4, 0.2

# Counter of (input row, tree) visits, incremented by every leaf-weight
# build; lets tests assert the O(N_aug * T) per-iteration cost bound.
_VISITS = 0


def reset_visit_count() -> None:
    global _VISITS
    _VISITS = 0


def visit_count() -> int:
    return _VISITS


@dataclass(frozen=True)
class ForestHyper:
    """Ensemble hyperparameters with the standard defaults.

    ``sigma_mu`` defaults to ``3 / (k * sqrt(n_trees))`` so the ensemble
    value has prior sd 3/k regardless of the tree count.
    """

    n_trees: int = 50
    branch_gamma: float = 0.95
    branch_beta: float = 2.0
    bandwidth_rate: float = 10.0
    k: float = 2.0
    sigma_mu: float | None = None

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.sigma_mu is None:
            object.__setattr__(self, "sigma_mu", 3.0 / (self.k * math.sqrt(self.n_trees)))

    def branch_prob(self, depth: int) -> float:
        return self.branch_gamma * (1.0 + depth) ** (-self.branch_beta)


class Node:
    """Tree node; a leaf iff ``left is None``."""

    __slots__ = ("coord", "cut", "left", "right", "mu")

    def __init__(self, coord=0, cut=0.0, left=None, right=None, mu=0.0):
        self.coord = coord
        self.cut = cut
        self.left = left
        self.right = right
        self.mu = mu

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def copy(self) -> "Node":
        if self.is_leaf:
            return Node(mu=self.mu)
        return Node(self.coord, self.cut, self.left.copy(), self.right.copy())


class SoftTree:
    """A proper binary tree with one shared gate bandwidth."""

    __slots__ = ("root", "bandwidth")

    def __init__(self, root: Node, bandwidth: float):
        if not (bandwidth > 0.0):
            raise ValueError(f"bandwidth must be positive, got {bandwidth}")
        self.root = root
        self.bandwidth = bandwidth

    def copy(self) -> "SoftTree":
        return SoftTree(self.root.copy(), self.bandwidth)

    def leaves(self) -> list[Node]:
        """Leaves in preorder; fixes the column order of weight matrices."""
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.append(node.right)
                stack.append(node.left)
        return out

    def leaf_means(self) -> np.ndarray:
        return np.array([leaf.mu for leaf in self.leaves()])

    def set_leaf_means(self, mu: np.ndarray) -> None:
        for leaf, value in zip(self.leaves(), mu, strict=True):
            leaf.mu = float(value)

    def _nodes_with_depth(self):
        out, stack = [], [(self.root, 0)]
        while stack:
            node, depth = stack.pop()
            out.append((node, depth))
            if not node.is_leaf:
                stack.append((node.right, depth + 1))
                stack.append((node.left, depth + 1))
        return out

    def n_leaves(self) -> int:
        return sum(1 for n, _ in self._nodes_with_depth() if n.is_leaf)

    def branches(self) -> list[Node]:
        return [n for n, _ in self._nodes_with_depth() if not n.is_leaf]

    def prunable(self) -> list[tuple[Node, int]]:
        """Branches whose children are both leaves, with their depths."""
        return [
            (n, d)
            for n, d in self._nodes_with_depth()
            if not n.is_leaf and n.left.is_leaf and n.right.is_leaf
        ]


@dataclass
class Forest:
    trees: list[SoftTree]
    hyper: ForestHyper

    def copy(self) -> "Forest":
        return Forest([t.copy() for t in self.trees], self.hyper)


@dataclass(frozen=True)
class InputScaler:
    """Maps raw (time, covariates) onto the unit cube, clamping overflow.

    Covariates are min-max scaled from the training ranges (binary columns
    land on {0, 1} automatically; constant columns map to 0).  Time is
    divided by ``time_scale``, chosen with headroom above the largest
    observed finite endpoint so imputed times rarely clamp.
    """

    time_scale: float
    cov_min: np.ndarray
    cov_range: np.ndarray

    @classmethod
    def from_data(cls, finite_endpoints, covariates, headroom: float = 1.5) -> "InputScaler":
        finite_endpoints = np.asarray(finite_endpoints, dtype=float)
        top = float(finite_endpoints.max()) if finite_endpoints.size else 0.0
        time_scale = headroom * top if top > 0.0 else 1.0
        x = np.atleast_2d(np.asarray(covariates, dtype=float))
        if x.shape[0] == 0:
            return cls(time_scale, np.zeros(x.shape[1]), np.zeros(x.shape[1]))
        lo = x.min(axis=0)
        rng = x.max(axis=0) - lo
        return cls(time_scale, lo, rng)

    @property
    def n_covariates(self) -> int:
        return len(self.cov_min)

    def scale_matrix(self, times, covariates) -> np.ndarray:
        """Rows of scaled (t, x) inputs; ``covariates`` is (n, p)."""
        times = np.asarray(times, dtype=float)
        x = np.atleast_2d(np.asarray(covariates, dtype=float))
        out = np.empty((len(times), 1 + self.n_covariates))
        out[:, 0] = np.clip(times / self.time_scale, 0.0, 1.0)
        safe = np.where(self.cov_range > 0.0, self.cov_range, 1.0)
        scaled = (x - self.cov_min) / safe
        scaled[:, self.cov_range == 0.0] = 0.0
        out[:, 1:] = np.clip(scaled, 0.0, 1.0)
        return out

    def scale_subject(self, times, x) -> np.ndarray:
        """Scaled inputs for one covariate vector at several times."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        x = np.asarray(x, dtype=float)
        return self.scale_matrix(times, np.broadcast_to(x, (len(times), len(x))))


def gate(x_j, cutpoint: float, bandwidth: float):
    """Probability of routing right: ``expit((x_j - cutpoint)/bandwidth)``."""
    if not (bandwidth > 0.0):
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    return expit((np.asarray(x_j, dtype=float) - cutpoint) / bandwidth)


def _branch_gates(tree: SoftTree, inputs: np.ndarray) -> np.ndarray | None:
    """(n, B) right-routing gate values, branches in preorder; None if a stump.

    One vectorized expit covers every branch; traversals then consume the
    columns in the same preorder, so no per-node indexing is needed.
    """
    coords, cuts = [], []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if not node.is_leaf:
            coords.append(node.coord)
            cuts.append(node.cut)
            stack.append(node.right)
            stack.append(node.left)
    if not coords:
        return None
    return expit((inputs[:, coords] - np.array(cuts)) / tree.bandwidth)


def leaf_weight_matrix(tree: SoftTree, inputs: np.ndarray) -> np.ndarray:
    """(n, L) matrix of leaf weights for each input row; rows sum to 1.

    Columns follow preorder leaf order (matching ``SoftTree.leaves``).
    """
    global _VISITS
    inputs = np.atleast_2d(inputs)
    n = inputs.shape[0]
    _VISITS += n
    gates = _branch_gates(tree, inputs)
    if gates is None:
        return np.ones((n, 1))
    out = np.empty((n, gates.shape[1] + 1))
    col = 0
    b = 0
    stack: list[tuple[Node, np.ndarray | None]] = [(tree.root, None)]
    while stack:
        node, prob = stack.pop()
        while not node.is_leaf:
            gate_col = gates[:, b]
            b += 1
            stack.append((node.right, gate_col if prob is None else prob * gate_col))
            prob = (1.0 - gate_col) if prob is None else prob * (1.0 - gate_col)
            node = node.left
        out[:, col] = 1.0 if prob is None else prob
        col += 1
    return out


def leaf_weights(tree: SoftTree, input_vec) -> np.ndarray:
    """Leaf-weight vector of a single scaled input."""
    return leaf_weight_matrix(tree, np.asarray(input_vec, dtype=float)[None, :])[0]


def tree_values(tree: SoftTree, inputs: np.ndarray) -> np.ndarray:
    """Weighted leaf-mean sums, accumulated without the weight matrix."""
    global _VISITS
    inputs = np.atleast_2d(inputs)
    n = inputs.shape[0]
    _VISITS += n
    gates = _branch_gates(tree, inputs)
    if gates is None:
        return np.full(n, tree.root.mu)
    val = np.zeros(n)
    b = 0
    stack: list[tuple[Node, np.ndarray | None]] = [(tree.root, None)]
    while stack:
        node, prob = stack.pop()
        while not node.is_leaf:
            gate_col = gates[:, b]
            b += 1
            stack.append((node.right, gate_col if prob is None else prob * gate_col))
            prob = (1.0 - gate_col) if prob is None else prob * (1.0 - gate_col)
            node = node.left
        val += node.mu if prob is None else node.mu * prob
    return val


def forest_values(forest: Forest, inputs: np.ndarray) -> np.ndarray:
    """Ensemble values l at scaled input rows."""
    inputs = np.atleast_2d(inputs)
    out = np.zeros(inputs.shape[0])
    for tree in forest.trees:
        out += tree_values(tree, inputs)
    return out


def evaluate(forest: Forest, t: float, x, scaler: InputScaler) -> float:
    """Ensemble value l(t, x) at one raw (time, covariates) point."""
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    return float(forest_values(forest, scaler.scale_subject([t], x))[0])


def subject_evaluator(forest: Forest, scaler: InputScaler, x):
    """Closure ``times -> l(times, x)`` binding one covariate vector."""

    def ell(times):
        return forest_values(forest, scaler.scale_subject(times, x))

    return ell


def sample_tree_prior(hyper: ForestHyper, n_covariates: int, rng: RngStream) -> SoftTree:
    """Draw a tree from the branching-process prior.

    Depth-k nodes branch with probability ``gamma*(1+k)**-beta``; split
    coordinates are uniform over time plus covariates, cutpoints uniform on
    [0,1], leaf means N(0, sigma_mu^2), and the tree bandwidth
    Gamma(1, bandwidth_rate).
    """
    gen = rng.generator

    def grow(depth: int) -> Node:
        if gen.random() < hyper.branch_prob(depth):
            coord = int(gen.integers(0, n_covariates + 1))
            cut = float(gen.random())
            return Node(coord, cut, grow(depth + 1), grow(depth + 1))
        return Node(mu=float(gen.normal(0.0, hyper.sigma_mu)))

    root = grow(0)
    bandwidth = float(gen.gamma(1.0) / hyper.bandwidth_rate)
    return SoftTree(root, bandwidth)


def sample_forest_prior(hyper: ForestHyper, n_covariates: int, rng: RngStream) -> Forest:
    return Forest([sample_tree_prior(hyper, n_covariates, rng) for _ in range(hyper.n_trees)], hyper)


def _log_marginal(weights: np.ndarray, z: np.ndarray, sigma_mu: float) -> float:
    """Log density of z under z = W mu + eps, mu ~ N(0, s^2 I), eps ~ N(0, I).

    Work happens in the L x L system M = I + s^2 W'W (Woodbury/Sylvester),
    never in an n x n one.  Raises ``np.linalg.LinAlgError`` when M is not
    numerically positive definite.
    """
    n, L = weights.shape
    if n == 0:
        return 0.0
    s2 = sigma_mu * sigma_mu
    m = s2 * (weights.T @ weights)
    m[np.diag_indices(L)] += 1.0
    chol = np.linalg.cholesky(m)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    v = weights.T @ z
    y = solve_triangular(chol, v, lower=True)
    quad = float(z @ z) - s2 * float(y @ y)
    return -0.5 * (n * math.log(2.0 * math.pi) + logdet + quad)


def tree_log_marginal(tree: SoftTree, inputs: np.ndarray, z: np.ndarray, sigma_mu: float) -> float:
    """Leaf-marginalized Gaussian log likelihood of residuals z for one tree."""
    return _log_marginal(leaf_weight_matrix(tree, inputs), np.asarray(z, dtype=float), sigma_mu)


def _draw_leaf_means(weights: np.ndarray, z: np.ndarray, sigma_mu: float, gen) -> np.ndarray:
    """Joint Gaussian draw of leaf means given residuals and weights."""
    L = weights.shape[1]
    prec = weights.T @ weights
    prec[np.diag_indices(L)] += 1.0 / (sigma_mu * sigma_mu)
    chol = np.linalg.cholesky(prec)
    mean = cho_solve((chol, True), weights.T @ z)
    noise = solve_triangular(chol.T, gen.standard_normal(L), lower=False)
    return mean + noise


def _propose_grow(tree: SoftTree, hyper: ForestHyper, n_covariates: int, gen):
    """Grow a uniformly chosen leaf; returns (proposal, log prior*proposal ratio)."""
    prop = tree.copy()
    leaves = [(n, d) for n, d in prop._nodes_with_depth() if n.is_leaf]
    node, depth = leaves[int(gen.integers(0, len(leaves)))]
    node.coord = int(gen.integers(0, n_covariates + 1))
    node.cut = float(gen.random())
    node.left = Node(mu=0.0)
    node.right = Node(mu=0.0)
    node.mu = 0.0

    q_d, q_d1 = hyper.branch_prob(depth), hyper.branch_prob(depth + 1)
    log_prior = math.log(q_d) + 2.0 * math.log1p(-q_d1) - math.log1p(-q_d)
    # Split-rule prior cancels against the forward proposal density.
    log_prop = math.log(_P_PRUNE / len(prop.prunable())) - math.log(_P_GROW / len(leaves))
    return prop, log_prior + log_prop


def _propose_prune(tree: SoftTree, hyper: ForestHyper, gen):
    prunable = tree.prunable()
    if not prunable:
        return None, 0.0
    prop = tree.copy()
    prunable_prop = prop.prunable()
    idx = int(gen.integers(0, len(prunable_prop)))
    node, depth = prunable_prop[idx]
    node.left = None
    node.right = None
    node.mu = 0.0

    q_d, q_d1 = hyper.branch_prob(depth), hyper.branch_prob(depth + 1)
    log_prior = math.log1p(-q_d) - math.log(q_d) - 2.0 * math.log1p(-q_d1)
    log_prop = math.log(_P_GROW / prop.n_leaves()) - math.log(_P_PRUNE / len(prunable))
    return prop, log_prior + log_prop


def _propose_change(tree: SoftTree, n_covariates: int, gen):
    branches = tree.branches()
    if not branches:
        return None, 0.0
    prop = tree.copy()
    node = prop.branches()[int(gen.integers(0, len(branches)))]
    node.coord = int(gen.integers(0, n_covariates + 1))
    node.cut = float(gen.random())
    return prop, 0.0


def backfit_sweep(forest: Forest, inputs: np.ndarray, z: np.ndarray, rng: RngStream) -> Forest:
    """One Bayesian-backfitting sweep of the ensemble against responses z.

    For each tree in turn: remove its fit from the working residuals,
    propose grow/prune/change (0.4/0.4/0.2) accepted by marginal-likelihood
    Metropolis-Hastings, redraw all leaf means from their joint Gaussian
    conditional, then update the tree bandwidth by a Metropolis step with
    the Gamma(1, bandwidth_rate) prior as proposal.  Mutates and returns
    ``forest``.  A non-positive-definite marginal system rejects the move.
    """
    inputs = np.atleast_2d(inputs)
    z = np.asarray(z, dtype=float)
    n_cov = inputs.shape[1] - 1
    hyper = forest.hyper
    gen = rng.generator

    total = np.zeros(inputs.shape[0])
    fits = []
    for tree in forest.trees:
        f = tree_values(tree, inputs)
        fits.append(f)
        total += f

    for t_idx, tree in enumerate(forest.trees):
        resid = z - total + fits[t_idx]
        weights = leaf_weight_matrix(tree, inputs)

        u = gen.random()
        if u < _P_GROW:
            proposal, log_ratio = _propose_grow(tree, hyper, n_cov, gen)
        elif u < _P_GROW + _P_PRUNE:
            proposal, log_ratio = _propose_prune(tree, hyper, gen)
        else:
            proposal, log_ratio = _propose_change(tree, n_cov, gen)

        if proposal is not None:
            try:
                cur_ml = _log_marginal(weights, resid, hyper.sigma_mu)
                prop_weights = leaf_weight_matrix(proposal, inputs)
                prop_ml = _log_marginal(prop_weights, resid, hyper.sigma_mu)
            except np.linalg.LinAlgError:
                proposal = None
            else:
                if math.log(gen.random()) < prop_ml - cur_ml + log_ratio:
                    forest.trees[t_idx] = tree = proposal
                    weights = prop_weights

        tree.set_leaf_means(_draw_leaf_means(weights, resid, hyper.sigma_mu, gen))
        mu = tree.leaf_means()

        # Bandwidth step: prior proposal, so the ratio is pure likelihood
        # at the freshly drawn leaf means.
        new_bw = float(gen.gamma(1.0) / hyper.bandwidth_rate)
        cand = SoftTree(tree.root, new_bw)
        cand_weights = leaf_weight_matrix(cand, inputs)
        cur_sse = float(np.sum((resid - weights @ mu) ** 2))
        cand_sse = float(np.sum((resid - cand_weights @ mu) ** 2))
        if math.log(gen.random()) < 0.5 * (cur_sse - cand_sse):
            tree.bandwidth = new_bw
            weights = cand_weights

        new_fit = weights @ mu
        total += new_fit - fits[t_idx]
        fits[t_idx] = new_fit

    return forest


def serialize_tree(tree: SoftTree) -> tuple[float, list[tuple]]:
    """Preorder node list: ``(0, coord, cut)`` for branches, ``(1, mu)`` for leaves."""
    nodes: list[tuple] = []

    def walk(node: Node) -> None:
        if node.is_leaf:
            nodes.append((1, node.mu))
        else:
            nodes.append((0, node.coord, node.cut))
            walk(node.left)
            walk(node.right)

    walk(tree.root)
    return tree.bandwidth, nodes


def deserialize_tree(bandwidth: float, nodes: list[tuple]) -> SoftTree:
    pos = 0

    def build() -> Node:
        nonlocal pos
        rec = nodes[pos]
        pos += 1
        if rec[0] == 1:
            return Node(mu=float(rec[1]))
        node = Node(int(rec[1]), float(rec[2]))
        node.left = build()
        node.right = build()
        return node

    root = build()
    if pos != len(nodes):
        raise ValueError("trailing nodes in serialized tree")
    return SoftTree(root, bandwidth)
