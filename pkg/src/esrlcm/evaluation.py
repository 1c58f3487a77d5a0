"""Model evaluation: predictive likelihood, class alignment, restriction
recovery metrics, and K-fold cross-validation."""

import hashlib
from dataclasses import replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from .mcmc import PosteriorDraws, run_chain
from .model import BaseClassMatrix, Dataset, canonicalize


def _mixture_obs_loglik(x, pi, theta):
    """Per-observation log of the mixture density under one parameter set."""
    loglik = kernels.class_loglik(x, np.log(theta), np.log1p(-theta))
    logp = loglik + np.log(pi)[None, :]
    shift = logp.max(axis=1, keepdims=True)
    return np.log(np.exp(logp - shift).sum(axis=1)) + shift[:, 0]


def align_classes(reference, target) -> np.ndarray:
    """Permutation matching target classes to reference classes.

    Returns ``perm`` minimizing the squared distance between ``reference``
    and ``target[perm]``, by optimal assignment on the class-by-class cost
    matrix.
    """
    reference = np.asarray(reference, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if reference.shape != target.shape:
        raise ValueError("reference and target must have identical shapes")
    cost = ((reference[:, None, :] - target[None, :, :]) ** 2).sum(axis=2)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(reference.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm


def predictive_loglik(draws: PosteriorDraws, holdout: Dataset,
                      mode: str = "predictive_mean") -> float:
    """Average out-of-sample log likelihood per observation.

    ``predictive_mean`` scores each observation by the log of the average
    mixture density over retained draws; ``plug_in`` first aligns the draws
    to the highest log-joint draw and scores with the posterior-mean
    parameters.
    """
    if draws.n_draws == 0:
        raise ValueError("draws must be nonempty")
    if mode == "predictive_mean":
        running = None
        for d in range(draws.n_draws):
            logp = _mixture_obs_loglik(holdout.x, draws.pi[d], draws.theta_matrix(d))
            running = logp if running is None else np.logaddexp(running, logp)
        return float((running - np.log(draws.n_draws)).mean())
    if mode == "plug_in":
        pi_bar, theta_bar = posterior_mean_parameters(draws)
        return float(_mixture_obs_loglik(holdout.x, pi_bar, theta_bar).mean())
    raise ValueError(f"unknown mode {mode!r}")


def _aligned_permutations(draws: PosteriorDraws):
    """Permutation per draw onto the highest log-joint draw's labeling."""
    ref = draws.theta_matrix(int(np.argmax(draws.log_joint)))
    return [align_classes(ref, draws.theta_matrix(d)) for d in range(draws.n_draws)]


def posterior_mean_parameters(draws: PosteriorDraws):
    """Posterior-mean class weights and response matrix of aligned draws."""
    perms = _aligned_permutations(draws)
    pi = np.mean([draws.pi[d][perm] for d, perm in enumerate(perms)], axis=0)
    theta = np.mean([draws.theta_matrix(d)[perm] for d, perm in enumerate(perms)], axis=0)
    return pi, theta


def mode_restrictions(draws: PosteriorDraws) -> BaseClassMatrix:
    """Most frequent partition per item among aligned draws.

    Ties break toward fewer equivalence sets, then lexicographically.
    """
    if draws.n_draws == 0:
        raise ValueError("draws must be nonempty")
    perms = _aligned_permutations(draws)
    n_items = len(draws.base_columns[0])
    columns = []
    for j in range(n_items):
        tallies = {}
        for d, perm in enumerate(perms):
            col = canonicalize(draws.base_columns[d][j][perm])
            tallies[tuple(col.tolist())] = tallies.get(tuple(col.tolist()), 0) + 1
        best = min(tallies.items(), key=lambda kv: (-kv[1], max(kv[0]), kv[0]))
        columns.append(np.asarray(best[0], dtype=np.int64))
    return BaseClassMatrix(np.column_stack(columns))


def restriction_pairs(column) -> np.ndarray:
    """Boolean vector over unordered class pairs: True when restricted."""
    column = np.asarray(column)
    n_classes = column.size
    idx = np.triu_indices(n_classes, k=1)
    return column[idx[0]] == column[idx[1]]


def restriction_sensitivity_specificity(truth: BaseClassMatrix,
                                        estimate: BaseClassMatrix,
                                        alignment=None):
    """Recovery rates of restricted and unrestricted class pairs.

    Sensitivity is the fraction of truly restricted pairs (equal response
    probabilities) the estimate also restricts; specificity the fraction of
    truly unrestricted pairs kept unrestricted. Pairs aggregate over items.
    A component with no eligible pairs is returned as None.
    """
    if (truth.n_classes, truth.n_items) != (estimate.n_classes, estimate.n_items):
        raise ValueError("matrices must have identical dimensions")
    if alignment is None:
        alignment = np.arange(truth.n_classes)
    alignment = np.asarray(alignment, dtype=np.int64)

    hits_restricted = total_restricted = 0
    hits_unrestricted = total_unrestricted = 0
    for j in range(truth.n_items):
        true_pairs = restriction_pairs(truth.column(j))
        est_pairs = restriction_pairs(estimate.column(j)[alignment])
        total_restricted += int(true_pairs.sum())
        hits_restricted += int((true_pairs & est_pairs).sum())
        total_unrestricted += int((~true_pairs).sum())
        hits_unrestricted += int((~true_pairs & ~est_pairs).sum())
    sensitivity = hits_restricted / total_restricted if total_restricted else None
    specificity = hits_unrestricted / total_unrestricted if total_unrestricted else None
    return sensitivity, specificity


def fold_assignments(seed: int, n: int, k: int) -> np.ndarray:
    """Deterministic, platform-stable fold labels in 0..k-1."""
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        digest = hashlib.blake2b(f"{seed}:{i}".encode(), digest_size=8).digest()
        out[i] = int.from_bytes(digest, "big") % k
    return out


def kfold_cv(data: Dataset, prior_grid, config, k: int, seed: int = 0):
    """K-fold cross-validated predictive log likelihood per prior config.

    Returns one (config, mean out-of-sample log likelihood per observation)
    row per grid entry. Observations are assigned to folds by a stable hash
    of (seed, index).
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if data.n < k:
        raise ValueError("need at least one observation per fold")
    folds = fold_assignments(seed, data.n, k)
    if np.bincount(folds, minlength=k).min() == 0:
        raise ValueError("a fold received no observations; lower k")

    rows = []
    for prior in prior_grid:
        total = 0.0
        for fold in range(k):
            train = Dataset(data.x[folds != fold])
            test = Dataset(data.x[folds == fold])
            fold_config = replace(config, seed=config.seed + fold)
            draws = run_chain(train, prior, fold_config)
            total += predictive_loglik(draws, test) * test.n
        rows.append((prior, total / data.n))
    return rows
