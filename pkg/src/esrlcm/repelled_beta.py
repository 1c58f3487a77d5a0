"""The repelled beta distribution family.

A vector rho in (0,1)^M follows a repelled beta distribution when its density
is proportional to

    prod_k rho_k^(a_k1 - 1) (1 - rho_k)^(a_k2 - 1)
        * prod_{k=2..M} (rho_(k) - rho_(k-1))^v

where rho_(k) denotes the k-th order statistic and v >= 0 is a repulsion
exponent. At v = 0 the components are independent betas; as v grows the
components are pushed apart. With all shape parameters equal to one the
normalizing constant is known in closed form, the sorted gaps follow a
Dirichlet distribution, and the family is conjugate for Bernoulli responses.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln


class SamplingError(RuntimeError):
    """Rejection sampling exhausted its attempt budget."""


@dataclass(frozen=True)
class RepelledBetaParams:
    """Shape matrix (M x 2, entries > 0) and repulsion exponent v >= 0."""

    alpha: np.ndarray
    v: float = 0.0

    def __post_init__(self):
        alpha = np.atleast_2d(np.asarray(self.alpha, dtype=np.float64))
        if alpha.ndim != 2 or alpha.shape[1] != 2 or alpha.shape[0] < 1:
            raise ValueError(f"alpha must be an M x 2 matrix with M >= 1, got shape {alpha.shape}")
        if not np.all(alpha > 0):
            raise ValueError("all alpha entries must be strictly positive")
        if not np.isfinite(self.v) or self.v < 0:
            raise ValueError(f"v must be a finite nonnegative real, got {self.v}")
        alpha.flags.writeable = False
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "v", float(self.v))

    @property
    def m(self) -> int:
        """Number of components."""
        return self.alpha.shape[0]


def _check_rho(params, rho):
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != (params.m,):
        raise ValueError(f"rho must have shape ({params.m},), got {rho.shape}")
    if np.any(rho <= 0.0) or np.any(rho >= 1.0):
        raise ValueError("rho components must lie strictly inside (0, 1)")
    return rho


def log_density_unnormalized(params: RepelledBetaParams, rho) -> float:
    """Log of the unnormalized density at ``rho``.

    Returns -inf when v > 0 and two components coincide. The gap term is
    omitted entirely at v = 0, so ties are harmless there.
    """
    rho = _check_rho(params, rho)
    a1 = params.alpha[:, 0]
    a2 = params.alpha[:, 1]
    out = float(np.sum((a1 - 1.0) * np.log(rho) + (a2 - 1.0) * np.log1p(-rho)))
    if params.m >= 2 and params.v > 0:
        gaps = np.diff(np.sort(rho, kind="stable"))
        if np.any(gaps == 0.0):
            return -np.inf
        out += params.v * float(np.log(gaps).sum())
    return out


def log_normalizer_all_ones(m: int, v: float) -> float:
    """Log normalizing constant for the all-ones shape matrix.

    The constant is Gamma((M-1)(v+1)+2) / (M! Gamma(v+1)^(M-1)).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if v < 0:
        raise ValueError("v must be >= 0")
    return float(
        gammaln((m - 1) * (v + 1.0) + 2.0) - gammaln(m + 1) - (m - 1) * gammaln(v + 1.0)
    )


def normalizer_all_ones(m: int, v: float) -> float:
    """Normalizing constant for the all-ones shape matrix."""
    return float(np.exp(log_normalizer_all_ones(m, v)))


def log_density_all_ones(rho, v: float) -> float:
    """Normalized log density for the all-ones shape matrix."""
    rho = np.asarray(rho, dtype=np.float64)
    params = RepelledBetaParams(np.ones((rho.shape[0], 2)), v)
    return log_normalizer_all_ones(params.m, v) + log_density_unnormalized(params, rho)


def sample(params: RepelledBetaParams, rng, max_attempts: int = 1_000_000,
           return_attempts: bool = False):
    """Exact draw by rejection from independent beta proposals.

    A proposal is accepted with probability ``prod(gaps)**v``, a valid
    acceptance probability because every gap is below one and v >= 0.
    Raises :class:`SamplingError` once ``max_attempts`` proposals have been
    rejected; a silently truncated draw would bias the Gibbs chain that
    consumes it.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be positive")
    a1 = params.alpha[:, 0]
    a2 = params.alpha[:, 1]
    m = params.m
    uniform_shapes = bool(np.all(params.alpha == 1.0))  # Beta(1,1) draws are uniforms

    def propose(k):
        if uniform_shapes:
            return rng.random((k, m))
        return rng.beta(a1, a2, size=(k, m))

    if m == 1 or params.v == 0.0:
        draw = propose(1)[0]
        return (draw, 1) if return_attempts else draw

    attempts = 0
    batch = 64
    while attempts < max_attempts:
        k = min(batch, max_attempts - attempts)
        props = propose(k)
        log_acc = params.v * np.sum(np.log(np.diff(np.sort(props, axis=1), axis=1)), axis=1)
        accepted = np.log(rng.random(k)) < log_acc
        hit = np.flatnonzero(accepted)
        if hit.size:
            attempts += int(hit[0]) + 1
            draw = props[hit[0]]
            return (draw, attempts) if return_attempts else draw
        attempts += k
        batch = min(batch * 4, 65536)
    raise SamplingError(
        f"no acceptance in {max_attempts} attempts (m={m}, v={params.v}); "
        "the repulsion exponent is too large for rejection sampling at this dimension"
    )


def gaps_distribution(m: int, v: float) -> np.ndarray:
    """Dirichlet parameters of the sorted-component gaps (all-ones case).

    The vector (rho_(1), rho_(2)-rho_(1), ..., 1-rho_(M)) of length M+1 is
    Dirichlet([1, v+1, ..., v+1, 1]). Cumulative sums of the first M gap
    draws give an exact monotone sample.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    out = np.full(m + 1, v + 1.0)
    out[0] = 1.0
    out[-1] = 1.0
    return out


def sample_sorted_all_ones(m: int, v: float, rng) -> np.ndarray:
    """Exact sorted draw for the all-ones case via the gap Dirichlet."""
    return np.cumsum(rng.dirichlet(gaps_distribution(m, v)))[:m]


def expected_rho(m: int, v: float, k: int) -> float:
    """Expectation of the k-th order statistic in the all-ones case."""
    if not 1 <= k <= m:
        raise ValueError(f"k must be in 1..{m}, got {k}")
    return (1.0 + (v + 1.0) * (k - 1)) / ((m - 1) * (v + 1.0) + 2.0)


def conjugate_posterior(params: RepelledBetaParams, counts) -> RepelledBetaParams:
    """Posterior after Bernoulli responses: shapes add counts, v unchanged.

    ``counts[k] = (successes, failures)`` observed for component k.
    """
    counts = np.asarray(counts)
    if counts.shape != (params.m, 2):
        raise ValueError(f"counts must have shape ({params.m}, 2), got {counts.shape}")
    if np.any(counts < 0) or not np.all(counts == np.floor(counts)):
        raise ValueError("counts must be nonnegative integers")
    return RepelledBetaParams(params.alpha + counts.astype(np.float64), params.v)


def beta_log_pdf(x: float, a: float, b: float) -> float:
    """Log density of Beta(a, b) at x in (0, 1)."""
    if x <= 0.0 or x >= 1.0:
        return -np.inf
    return (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - betaln(a, b)
