"""Core data model: datasets, base class matrices, priors, and the joint density.

A base class matrix assigns every (class, item) pair an equivalence set
label; classes sharing a label for an item share that item's response
probability. Columns are kept in canonical form (labels ordered by first
occurrence, starting at 1) so equal partitions always compare equal.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from . import kernels, repelled_beta

V_FIXED_ZERO = "fixed_zero"
V_FREE = "free"


# ---------------------------------------------------------------------------
# partitions and counting
# ---------------------------------------------------------------------------

def canonicalize(raw_column) -> np.ndarray:
    """Relabel a column of partition labels into canonical form.

    The first entry becomes 1 and each previously unseen label receives the
    next unused integer, so any two labelings of the same partition map to
    the same vector.
    """
    raw = np.asarray(raw_column)
    if raw.ndim != 1 or raw.size == 0:
        raise ValueError("column must be a nonempty 1-d vector of labels")
    seen = {}
    out = np.empty(raw.size, dtype=np.int64)
    for i, label in enumerate(raw.tolist()):
        if label not in seen:
            seen[label] = len(seen) + 1
        out[i] = seen[label]
    return out


def is_canonical(column) -> bool:
    column = np.asarray(column)
    return bool(np.array_equal(column, canonicalize(column)))


@lru_cache(maxsize=None)
def _stirling_row(n: int) -> tuple:
    # S(n, k) for k = 0..n, exact integers
    if n == 0:
        return (1,)
    prev = _stirling_row(n - 1)
    row = [0] * (n + 1)
    for k in range(1, n + 1):
        above = prev[k] if k < n else 0
        row[k] = k * above + prev[k - 1]
    return tuple(row)


def stirling2(n_classes: int, k: int) -> int:
    """Stirling number of the second kind S(n, k), exact integer."""
    if n_classes < 1:
        raise ValueError("n_classes must be >= 1")
    if not 1 <= k <= n_classes:
        raise ValueError(f"k must be in 1..{n_classes}, got {k}")
    return _stirling_row(n_classes)[k]


def bell(n_classes: int) -> int:
    """Number of set partitions of n_classes objects, exact integer."""
    if n_classes < 1:
        raise ValueError("n_classes must be >= 1")
    return sum(_stirling_row(n_classes)[1:])


def all_partition_columns(n_classes: int):
    """All canonical partition columns of ``n_classes`` classes, lexicographic."""
    columns = []

    def grow(prefix, n_used):
        if len(prefix) == n_classes:
            columns.append(np.array(prefix, dtype=np.int64))
            return
        for label in range(1, n_used + 2):
            grow(prefix + [label], max(n_used, label))

    grow([1], 1)
    return columns


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    """Binary response matrix, observations by items.

    The canonical CSV layout has a header ``item1,...,itemJ`` and one 0/1
    row per observation. Empty datasets (n = 0) are allowed so that
    prior-only chains can run.
    """

    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x)
        if x.ndim != 2 or x.shape[1] < 1:
            raise ValueError(f"x must be a 2-d matrix with at least one item, got shape {x.shape}")
        if x.size and not np.isin(x, (0, 1)).all():
            raise ValueError("all responses must be 0 or 1")
        self.x = np.ascontiguousarray(x, dtype=np.int8)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def n_items(self) -> int:
        return self.x.shape[1]

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path) as fh:
            header = fh.readline().strip()
        n_items = len(header.split(","))
        x = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
        if x.size == 0:
            x = x.reshape(0, n_items)
        return cls(x)

    def to_csv(self, path) -> None:
        header = ",".join(f"item{j + 1}" for j in range(self.n_items))
        np.savetxt(path, self.x, fmt="%d", delimiter=",", header=header, comments="")


@dataclass
class BaseClassMatrix:
    """Classes-by-items matrix of equivalence set labels, columns canonical."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 2 or labels.shape[0] < 1 or labels.shape[1] < 1:
            raise ValueError(f"labels must be a C x J matrix, got shape {labels.shape}")
        for j in range(labels.shape[1]):
            if not is_canonical(labels[:, j]):
                raise ValueError(f"column {j} is not in canonical form: {labels[:, j]}")
        self.labels = labels

    @classmethod
    def from_raw(cls, raw) -> "BaseClassMatrix":
        """Build from arbitrary labels, canonicalizing every column."""
        raw = np.atleast_2d(np.asarray(raw))
        cols = [canonicalize(raw[:, j]) for j in range(raw.shape[1])]
        return cls(np.column_stack(cols))

    @property
    def n_classes(self) -> int:
        return self.labels.shape[0]

    @property
    def n_items(self) -> int:
        return self.labels.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.labels[:, j]

    def n_base(self, j: int) -> int:
        """Number of equivalence sets for item j."""
        return int(self.labels[:, j].max())

    def n_base_all(self) -> np.ndarray:
        return self.labels.max(axis=0)

    def __eq__(self, other):
        return isinstance(other, BaseClassMatrix) and np.array_equal(self.labels, other.labels)


@dataclass
class PriorConfig:
    """Hyperparameters of the model priors.

    Exactly one of ``zeta`` (a distribution over the number of equivalence
    sets) or ``lam`` (the geometric-style penalty with P(column) proportional
    to lam**n_sets) must be given. ``alpha_c`` is the Dirichlet prior on the
    class weights and implicitly fixes the number of classes. The response
    probability prior is the repelled beta with all-ones shapes and exponent
    v, where v is either fixed at zero or free on (0, max_v) with log prior
    d1*log(v) + d2*v.
    """

    alpha_c: np.ndarray
    lam: float = None
    zeta: np.ndarray = None
    d1: float = 1.0
    d2: float = 1.0
    max_v: float = 2.0
    v_mode: str = V_FREE

    def __post_init__(self):
        self.alpha_c = np.asarray(self.alpha_c, dtype=np.float64)
        if self.alpha_c.ndim != 1 or self.alpha_c.size < 1 or np.any(self.alpha_c <= 0):
            raise ValueError("alpha_c must be a positive vector")
        if (self.lam is None) == (self.zeta is None):
            raise ValueError("exactly one of lam and zeta must be given")
        if self.lam is not None:
            if not 0 < self.lam <= 1:
                raise ValueError(f"lam must be in (0, 1], got {self.lam}")
            self.lam = float(self.lam)
        else:
            self.zeta = np.asarray(self.zeta, dtype=np.float64)
            if self.zeta.shape != (self.n_classes,):
                raise ValueError("zeta must have one entry per possible number of sets")
            if np.any(self.zeta < 0) or abs(self.zeta.sum() - 1.0) > 1e-9:
                raise ValueError("zeta must be a probability vector")
        if self.d1 <= 0 or self.d2 <= 0:
            raise ValueError("d1 and d2 must be positive")
        if self.max_v <= 0:
            raise ValueError("max_v must be positive")
        if self.v_mode not in (V_FIXED_ZERO, V_FREE):
            raise ValueError(f"v_mode must be '{V_FIXED_ZERO}' or '{V_FREE}'")

    @property
    def n_classes(self) -> int:
        return self.alpha_c.size

    @classmethod
    def default(cls, n_classes: int, lam: float = 1.0, v_mode: str = V_FREE,
                **kwargs) -> "PriorConfig":
        return cls(alpha_c=np.ones(n_classes), lam=lam, v_mode=v_mode, **kwargs)


@lru_cache(maxsize=None)
def _log_lambda_normalizer(n_classes: int, lam: float) -> float:
    # log sum_k S(C, k) lam^k, exact Stirling numbers in float accumulation
    row = _stirling_row(n_classes)
    return float(np.log(sum(row[k] * lam ** k for k in range(1, n_classes + 1))))


def base_vector_log_prior(column, prior: PriorConfig) -> float:
    """Log prior probability of one canonical base class column.

    With zeta: log zeta[n_sets] - log S(C, n_sets). With lam the prior is
    proportional to lam**n_sets, normalized over all partitions.
    """
    column = np.asarray(column)
    n_classes = column.size
    n_sets = int(column.max())
    if prior.lam is not None:
        return n_sets * float(np.log(prior.lam)) - _log_lambda_normalizer(n_classes, prior.lam)
    z = prior.zeta[n_sets - 1]
    if z == 0.0:
        return -np.inf
    return float(np.log(z)) - float(np.log(stirling2(n_classes, n_sets)))


def theta_from_base(theta_prime_j, column) -> np.ndarray:
    """Expand per-set response probabilities to per-class: theta[c] = theta'[label[c]]."""
    theta_prime_j = np.asarray(theta_prime_j, dtype=np.float64)
    column = np.asarray(column)
    if theta_prime_j.shape != (int(column.max()),):
        raise ValueError(
            f"theta' has length {theta_prime_j.size} but the column has {int(column.max())} sets"
        )
    return theta_prime_j[column - 1]


@dataclass
class ModelState:
    """One MCMC state.

    ``memberships`` are 0-based class indices; ``theta_prime[j]`` holds one
    response probability per equivalence set of item j. The per-class
    response matrix is always derived, never stored.
    """

    pi: np.ndarray
    memberships: np.ndarray
    base: BaseClassMatrix
    theta_prime: list
    v: float = 0.0

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=np.float64)
        self.memberships = np.asarray(self.memberships, dtype=np.int64)
        self.theta_prime = [np.asarray(t, dtype=np.float64) for t in self.theta_prime]
        n_classes = self.base.n_classes
        if self.pi.shape != (n_classes,):
            raise ValueError("pi length must equal the number of classes")
        if abs(self.pi.sum() - 1.0) > 1e-8 or np.any(self.pi <= 0):
            raise ValueError("pi must be a strictly positive probability vector")
        if self.memberships.size and (
            self.memberships.min() < 0 or self.memberships.max() >= n_classes
        ):
            raise ValueError("memberships out of range")
        if len(self.theta_prime) != self.base.n_items:
            raise ValueError("theta_prime must have one vector per item")
        for j, t in enumerate(self.theta_prime):
            if t.shape != (self.base.n_base(j),):
                raise ValueError(f"theta_prime[{j}] length does not match its column")
        if self.v < 0:
            raise ValueError("v must be nonnegative")

    def theta_matrix(self) -> np.ndarray:
        """Per-class response probabilities, classes by items."""
        cols = [theta_from_base(self.theta_prime[j], self.base.column(j))
                for j in range(self.base.n_items)]
        return np.column_stack(cols)


def _log_dirichlet_pdf(x, alpha) -> float:
    return float(
        np.sum((alpha - 1.0) * np.log(x)) + gammaln(alpha.sum()) - gammaln(alpha).sum()
    )


def full_log_joint(state: ModelState, data: Dataset, prior: PriorConfig) -> float:
    """Log of the full joint density of parameters and data.

    Sums the Dirichlet prior on pi, per-item partition priors and normalized
    repelled beta priors on theta', the (unnormalized) prior on v when v is
    free, the membership probabilities, and the Bernoulli likelihood.
    """
    n_classes = state.base.n_classes
    if data.n_items != state.base.n_items or prior.n_classes != n_classes:
        raise ValueError("state, data, and prior dimensions are inconsistent")
    if data.n != state.memberships.size:
        raise ValueError("memberships length does not match the dataset")

    out = _log_dirichlet_pdf(state.pi, prior.alpha_c)
    for j in range(state.base.n_items):
        column = state.base.column(j)
        out += base_vector_log_prior(column, prior)
        out += repelled_beta.log_density_all_ones(state.theta_prime[j], state.v)
    if prior.v_mode == V_FREE:
        if not 0.0 < state.v < prior.max_v:
            return -np.inf
        out += prior.d1 * float(np.log(state.v)) + prior.d2 * state.v

    successes, totals = kernels.class_counts(data.x, state.memberships, n_classes)
    out += float(totals @ np.log(state.pi))
    theta = state.theta_matrix()
    failures = totals[:, None] - successes
    out += float(np.sum(successes * np.log(theta) + failures * np.log1p(-theta)))
    return out
