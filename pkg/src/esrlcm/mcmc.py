"""Posterior sampler: conjugate Gibbs sweeps, collapsed base class moves at
v = 0, reversible jump base class moves at v > 0, and an independence
Metropolis step on the repulsion exponent v.

Each sweep updates, in order: all memberships, the class weights, then per
item the base class column followed by a conjugate redraw of theta', and
finally v when it is free. Chains are reproducible given (seed, chain index).
"""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln, gammaln

from . import kernels, repelled_beta
from .model import (
    V_FIXED_ZERO,
    V_FREE,
    BaseClassMatrix,
    Dataset,
    ModelState,
    PriorConfig,
    base_vector_log_prior,
    canonicalize,
    full_log_joint,
)
from .repelled_beta import RepelledBetaParams, SamplingError, beta_log_pdf


@dataclass
class McmcConfig:
    """Sweep counts, seeding, thinning, and sampler switches.

    ``v_mode`` may be left as None to inherit the prior's mode.
    ``unrestricted`` pins every column to the all-distinct partition,
    recovering a plain latent class model.
    """

    n_main: int
    n_warmup: int = 0
    n_chains: int = 1
    seed: int = 0
    thin: int = 1
    v_mode: str = None
    store_c_every: int = 0
    unrestricted: bool = False
    rj_proposal_correction: bool = True
    max_sample_attempts: int = 50_000
    theta_mh_fallback: bool = True

    def __post_init__(self):
        if self.n_main < 1:
            raise ValueError("n_main must be >= 1")
        if self.n_warmup < 0:
            raise ValueError("n_warmup must be >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative 64-bit integer")
        if self.v_mode not in (None, V_FIXED_ZERO, V_FREE):
            raise ValueError(f"invalid v_mode {self.v_mode!r}")


@dataclass
class PosteriorDraws:
    """Retained draws of one chain plus sampler diagnostics."""

    iters: np.ndarray
    log_joint: np.ndarray
    v: np.ndarray
    pi: np.ndarray
    base_columns: list
    theta_prime: list
    memberships: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return len(self.base_columns)

    def base_matrix(self, d: int) -> BaseClassMatrix:
        return BaseClassMatrix(np.column_stack(self.base_columns[d]))

    def theta_matrix(self, d: int) -> np.ndarray:
        cols = [tp[col - 1] for col, tp in zip(self.base_columns[d], self.theta_prime[d])]
        return np.column_stack(cols)

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for d in range(self.n_draws):
                rec = {
                    "iter": int(self.iters[d]),
                    "log_joint": float(self.log_joint[d]),
                    "v": float(self.v[d]),
                    "pi": self.pi[d].tolist(),
                    "B": [col.tolist() for col in self.base_columns[d]],
                    "theta_prime": [tp.tolist() for tp in self.theta_prime[d]],
                }
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "PosteriorDraws":
        iters, log_joint, v, pi, base_columns, theta_prime = [], [], [], [], [], []
        with open(path) as fh:
            for line in fh:
                rec = json.loads(line)
                iters.append(rec["iter"])
                log_joint.append(rec["log_joint"])
                v.append(rec["v"])
                pi.append(rec["pi"])
                cols = [np.asarray(c, dtype=np.int64) for c in rec["B"]]
                tps = [np.asarray(t, dtype=np.float64) for t in rec["theta_prime"]]
                for col, tp in zip(cols, tps):
                    if not np.array_equal(col, canonicalize(col)):
                        raise ValueError("stored base column is not canonical")
                    if tp.size != col.max():
                        raise ValueError("stored theta' length does not match its column")
                base_columns.append(cols)
                theta_prime.append(tps)
        return cls(
            iters=np.asarray(iters, dtype=np.int64),
            log_joint=np.asarray(log_joint, dtype=np.float64),
            v=np.asarray(v, dtype=np.float64),
            pi=np.asarray(pi, dtype=np.float64),
            base_columns=base_columns,
            theta_prime=theta_prime,
        )

    def write_memberships(self, path) -> None:
        with open(path, "w") as fh:
            for it in sorted(self.memberships):
                fh.write(json.dumps({"iter": int(it), "c": self.memberships[it].tolist()}) + "\n")


# ---------------------------------------------------------------------------
# per-item count helpers
# ---------------------------------------------------------------------------

def _clip_unit(values):
    # keep response probabilities strictly interior so logs stay finite
    return np.clip(values, 1e-12, 1.0 - 1e-12)


def _item_counts(column, memberships, x_j):
    """Per-set success/failure counts for one item from raw responses."""
    n_sets = int(column.max())
    by_class = column[memberships] - 1
    succ = np.bincount(by_class, weights=x_j, minlength=n_sets)
    tot = np.bincount(by_class, minlength=n_sets)
    return succ, tot - succ


def _item_counts_from_class_counts(column, succ_j, totals):
    """Same as :func:`_item_counts` but from cached per-class counts."""
    n_sets = int(column.max())
    idx = column - 1
    succ = np.bincount(idx, weights=succ_j, minlength=n_sets)
    tot = np.bincount(idx, weights=totals, minlength=n_sets)
    return succ, tot - succ


def collapsed_item_loglik_v0(column, memberships, x_j) -> float:
    """Marginal log likelihood of one item's responses given its partition.

    Integrates the per-set response probabilities out under independent
    uniform priors, valid only at v = 0.
    """
    succ, fail = _item_counts(np.asarray(column), np.asarray(memberships), np.asarray(x_j))
    return float(betaln(1.0 + succ, 1.0 + fail).sum())


def _collapsed_loglik_counts(column, succ_j, totals) -> float:
    succ, fail = _item_counts_from_class_counts(column, succ_j, totals)
    return float(betaln(1.0 + succ, 1.0 + fail).sum())


def _item_loglik(column, theta_j, succ_j, totals) -> float:
    """Bernoulli log likelihood of one item from per-class counts."""
    t = theta_j[column - 1]
    fail_j = totals - succ_j
    return float(succ_j @ np.log(t) + fail_j @ np.log1p(-t))


def _base_move_candidates(column, target):
    """Candidate columns when class ``target`` may change its label.

    The menu is: join each equivalence set present among the other classes,
    or open a fresh singleton set. The current column is always in the menu.
    """
    others = np.delete(column, target)
    candidates = []
    for label in np.unique(others):
        cand = column.copy()
        cand[target] = label
        candidates.append(canonicalize(cand))
    cand = column.copy()
    cand[target] = column.max() + 1
    candidates.append(canonicalize(cand))
    return candidates


def _pick_categorical(log_weights, rng) -> int:
    log_weights = np.asarray(log_weights, dtype=np.float64)
    p = np.exp(log_weights - log_weights.max())
    cum = np.cumsum(p)
    return int(np.searchsorted(cum, rng.random() * cum[-1], side="right").clip(0, p.size - 1))


def _class_count_cache(state, data):
    return kernels.class_counts(data.x, state.memberships, state.base.n_classes)


# ---------------------------------------------------------------------------
# base class updates
# ---------------------------------------------------------------------------

def gibbs_update_base_class_v0(j, state, data, prior, rng, counts=None):
    """Collapsed Gibbs move on one item's partition, valid at v = 0.

    A uniformly chosen class has its label resampled from the exact full
    conditional over the candidate menu, with theta' integrated out; theta'
    is then redrawn conjugately because the number of sets may have changed.
    """
    succ, totals = counts if counts is not None else _class_count_cache(state, data)
    succ_j = succ[:, j].astype(np.float64)
    totals = totals.astype(np.float64)

    target = int(rng.integers(state.base.n_classes))
    candidates = _base_move_candidates(state.base.column(j), target)
    log_w = [
        base_vector_log_prior(cand, prior) + _collapsed_loglik_counts(cand, succ_j, totals)
        for cand in candidates
    ]
    column = candidates[_pick_categorical(log_w, rng)]
    state.base.labels[:, j] = column

    s_b, f_b = _item_counts_from_class_counts(column, succ_j, totals)
    state.theta_prime[j] = _clip_unit(rng.beta(1.0 + s_b, 1.0 + f_b))
    return state


def rj_update_base_class(j, state, data, prior, rng, counts=None,
                         proposal_correction=True):
    """Reversible jump move on one item's partition and theta', for v > 0.

    The column proposal reuses the collapsed v = 0 conditional; the source
    and destination sets of the moved class receive fresh conjugate beta
    proposals. The acceptance ratio combines the partition prior, the
    normalized repelled beta prior (dimensions may differ), the likelihood,
    the beta proposal densities of the refreshed components in both
    directions, and, with ``proposal_correction`` on, the forward/reverse
    column proposal probabilities (the menus coincide, so their normalizers
    cancel and only the weight ratio survives); switching the correction off
    reproduces the plain acceptance formula for comparison.
    """
    succ, totals = counts if counts is not None else _class_count_cache(state, data)
    succ_j = succ[:, j].astype(np.float64)
    totals = totals.astype(np.float64)
    v = state.v

    col_old = state.base.column(j).copy()
    theta_old = state.theta_prime[j]
    target = int(rng.integers(state.base.n_classes))
    candidates = _base_move_candidates(col_old, target)
    log_w = np.array([
        base_vector_log_prior(cand, prior) + _collapsed_loglik_counts(cand, succ_j, totals)
        for cand in candidates
    ])
    pick = _pick_categorical(log_w, rng)
    col_new = candidates[pick]
    old_idx = next(i for i, cand in enumerate(candidates) if np.array_equal(cand, col_old))

    n_new = int(col_new.max())
    s_new, f_new = _item_counts_from_class_counts(col_new, succ_j, totals)
    s_old, f_old = _item_counts_from_class_counts(col_old, succ_j, totals)

    # Sets touched by the move: the destination (always exists in the new
    # column) and the remainder of the source (when the moved class was not
    # alone). Both are refreshed; everything else carries its value over.
    dest_new = int(col_new[target])
    source_members = np.flatnonzero((col_old == col_old[target]))
    source_members = source_members[source_members != target]
    forward_refresh = {dest_new}
    if source_members.size:
        forward_refresh.add(int(col_new[source_members[0]]))

    theta_new = np.empty(n_new)
    for label in range(1, n_new + 1):
        members = np.flatnonzero(col_new == label)
        members = members[members != target]
        if label in forward_refresh:
            theta_new[label - 1] = _clip_unit(
                rng.beta(1.0 + s_new[label - 1], 1.0 + f_new[label - 1])
            )
        else:
            theta_new[label - 1] = theta_old[col_old[members[0]] - 1]

    # Reverse move: from the new column, moving the class back refreshes the
    # old source set and, when the destination already existed, that set too.
    reverse_refresh = {int(col_old[target])}
    dest_members = np.flatnonzero(col_new == dest_new)
    dest_members = dest_members[dest_members != target]
    if dest_members.size:
        reverse_refresh.add(int(col_old[dest_members[0]]))

    log_acc = (
        base_vector_log_prior(col_new, prior)
        - base_vector_log_prior(col_old, prior)
        + repelled_beta.log_density_all_ones(theta_new, v)
        - repelled_beta.log_density_all_ones(theta_old, v)
        + _item_loglik(col_new, theta_new, succ_j, totals)
        - _item_loglik(col_old, theta_old, succ_j, totals)
    )
    for label in reverse_refresh:
        log_acc += beta_log_pdf(theta_old[label - 1], 1.0 + s_old[label - 1], 1.0 + f_old[label - 1])
    for label in forward_refresh:
        log_acc -= beta_log_pdf(theta_new[label - 1], 1.0 + s_new[label - 1], 1.0 + f_new[label - 1])
    if proposal_correction:
        log_acc += log_w[old_idx] - log_w[pick]

    accepted = np.log(rng.random()) < log_acc
    if accepted:
        state.base.labels[:, j] = col_new
        state.theta_prime[j] = theta_new
    return state, bool(accepted)


# ---------------------------------------------------------------------------
# v updates
# ---------------------------------------------------------------------------

def _v_conditional_terms(state):
    """Set sizes and the summed negative log gaps entering the v conditional."""
    sizes = []
    d2_data = 0.0
    for j in range(state.base.n_items):
        n_sets = state.base.n_base(j)
        if n_sets >= 2:
            sizes.append(n_sets)
            gaps = np.diff(np.sort(state.theta_prime[j]))
            d2_data -= float(np.log(np.clip(gaps, 1e-300, None)).sum())
    return np.asarray(sizes, dtype=np.float64), d2_data


def _v_log_conditional(sizes, d2_data, prior):
    def logpost(v):
        out = prior.d1 * np.log(v) + (prior.d2 - d2_data) * v
        if sizes.size:
            out += float(np.sum(gammaln((sizes - 1.0) * (v + 1.0) + 2.0)
                                - (sizes - 1.0) * gammaln(v + 1.0)))
        return out

    return logpost


def _golden_max(f, lo, hi, tol):
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - inv_phi * (b - a)
    x2 = a + inv_phi * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + inv_phi * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - inv_phi * (b - a)
            f1 = f(x1)
    return (a + b) / 2.0


def map_v(state: ModelState, prior: PriorConfig, tol: float = 1e-4) -> float:
    """Mode of the full conditional of v on (0, max_v].

    A coarse grid brackets the maximum and golden-section search refines it
    to the absolute tolerance. Items with a single equivalence set drop out
    of the conditional.
    """
    sizes, d2_data = _v_conditional_terms(state)
    logpost = _v_log_conditional(sizes, d2_data, prior)
    grid = np.linspace(tol, prior.max_v, 129)
    values = [logpost(v) for v in grid]
    k = int(np.argmax(values))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    best = _golden_max(logpost, lo, hi, tol)
    if logpost(prior.max_v) >= logpost(best):
        return float(prior.max_v)
    return float(best)


def triangular_density(a: float, b: float, c: float, x: float) -> float:
    """Density of the triangular distribution on [a, c] with mode b.

    Zero outside [a, c]; the peak value 2/(c-a) at b makes the area one.
    """
    if not a < b < c:
        raise ValueError("need a < b < c")
    if x < a or x > c:
        return 0.0
    if x <= b:
        return 2.0 * (x - a) / ((c - a) * (b - a))
    return 2.0 * (c - x) / ((c - a) * (c - b))


def sample_triangular(a: float, b: float, c: float, rng) -> float:
    u = rng.random()
    split = (b - a) / (c - a)
    if u < split:
        return a + np.sqrt(u * (c - a) * (b - a))
    return c - np.sqrt((1.0 - u) * (c - a) * (c - b))


def metropolis_update_v(state, prior, rng):
    """Independence Metropolis step on v with a triangular proposal at the
    conditional mode."""
    sizes, d2_data = _v_conditional_terms(state)
    logpost = _v_log_conditional(sizes, d2_data, prior)
    eps = prior.max_v * 1e-9
    mode = float(np.clip(map_v(state, prior), eps, prior.max_v - eps))
    proposal = sample_triangular(0.0, mode, prior.max_v, rng)
    if not 0.0 < proposal < prior.max_v:
        return state, False
    log_acc = (
        logpost(proposal) - logpost(state.v)
        + np.log(triangular_density(0.0, mode, prior.max_v, state.v))
        - np.log(triangular_density(0.0, mode, prior.max_v, proposal))
    )
    accepted = np.log(rng.random()) < log_acc
    if accepted:
        state.v = float(proposal)
    return state, bool(accepted)


# ---------------------------------------------------------------------------
# conjugate updates
# ---------------------------------------------------------------------------

def _log_gap_term(theta, v):
    if theta.size < 2 or v == 0.0:
        return 0.0
    gaps = np.diff(np.sort(theta))
    if np.any(gaps <= 0.0):
        return -np.inf
    return v * float(np.log(gaps).sum())


def gibbs_update_theta(j, state, data, prior, rng, counts=None,
                       max_attempts=1_000_000, return_attempts=False,
                       mh_fallback=True):
    """Redraw theta' for item j from its repelled beta full conditional.

    The exact rejection draw is attempted first. When its budget runs out
    (large repulsion with several near-identical sets) and ``mh_fallback``
    is on, one independence Metropolis step with the same conjugate beta
    proposal is taken instead: the proposal density cancels the beta factors
    of the target, so the acceptance ratio is the gap-term ratio and the
    full conditional stays exactly invariant. With ``mh_fallback`` off the
    sampling failure propagates.
    """
    succ, totals = counts if counts is not None else _class_count_cache(state, data)
    s_b, f_b = _item_counts_from_class_counts(
        state.base.column(j), succ[:, j].astype(np.float64), totals.astype(np.float64)
    )
    params = RepelledBetaParams(np.column_stack([1.0 + s_b, 1.0 + f_b]), state.v)
    fell_back = False
    try:
        draw, attempts = repelled_beta.sample(params, rng, max_attempts, return_attempts=True)
        state.theta_prime[j] = _clip_unit(draw)
    except SamplingError as err:
        if not mh_fallback:
            raise SamplingError(f"item {j}: {err}") from err
        fell_back = True
        attempts = max_attempts
        proposal = _clip_unit(rng.beta(params.alpha[:, 0], params.alpha[:, 1]))
        log_acc = _log_gap_term(proposal, state.v) - _log_gap_term(state.theta_prime[j], state.v)
        if np.log(rng.random()) < log_acc:
            state.theta_prime[j] = proposal
    if return_attempts:
        return state, attempts, fell_back
    return state


def gibbs_update_pi(state, prior, rng):
    """Redraw the class weights from their Dirichlet full conditional."""
    counts = np.bincount(state.memberships, minlength=state.base.n_classes)
    pi = rng.dirichlet(prior.alpha_c + counts)
    state.pi = np.clip(pi, 1e-300, None)
    state.pi /= state.pi.sum()
    return state


def gibbs_update_c(i, state, data, rng):
    """Redraw one observation's class membership."""
    theta = state.theta_matrix()
    x_i = data.x[i].astype(np.float64)
    loglik = x_i @ np.log(theta).T + (1.0 - x_i) @ np.log1p(-theta).T
    logp = np.log(state.pi) + loglik
    state.memberships[i] = _pick_categorical(logp, rng)
    return state


def _update_all_memberships(state, data, rng):
    # Memberships are conditionally independent given (pi, theta), so the
    # batched draw equals per-observation Gibbs.
    theta = state.theta_matrix()
    loglik = kernels.class_loglik(data.x, np.log(theta), np.log1p(-theta))
    logp = loglik + np.log(state.pi)[None, :]
    state.memberships = kernels.categorical_rows(logp, rng.random(data.n))
    return state


# ---------------------------------------------------------------------------
# chain driver
# ---------------------------------------------------------------------------

def _initial_state(data, prior, config, rng):
    n_classes = prior.n_classes
    v_mode = config.v_mode or prior.v_mode
    base = BaseClassMatrix(
        np.tile(np.arange(1, n_classes + 1)[:, None], (1, data.n_items))
    )
    # v starts small: the over-dispersed start has near-identical response
    # probabilities per item, and a large initial v would deadlock the first
    # theta rejection sweep before the first v update can adapt.
    state = ModelState(
        pi=rng.dirichlet(prior.alpha_c),
        memberships=rng.integers(0, n_classes, size=data.n),
        base=base,
        theta_prime=[_clip_unit(rng.random(n_classes)) for _ in range(data.n_items)],
        v=min(0.1, prior.max_v / 2.0) if v_mode == V_FREE else 0.0,
    )
    return state


def run_chain(data: Dataset, prior: PriorConfig, config: McmcConfig,
              rng=None, chain_index: int = 0) -> PosteriorDraws:
    """Run one chain and return the retained draws.

    Sweep order: memberships, pi, per item (base class move, theta' Gibbs),
    then v when free. Warmup sweeps are discarded and every ``thin``-th main
    sweep is retained.
    """
    v_mode = config.v_mode or prior.v_mode
    if rng is None:
        rng = np.random.default_rng(config.seed ^ chain_index)
    state = _initial_state(data, prior, config, rng)
    n_items = data.n_items

    iters, log_joint, vs, pis = [], [], [], []
    base_columns, theta_prime, memberships = [], [], {}
    rj_accept = rj_total = v_accept = v_total = 0
    theta_attempts_total = 0
    theta_attempts_max = 0
    theta_mh_fallbacks = 0
    n_retained = 0

    total_sweeps = config.n_warmup + config.n_main
    for sweep in range(total_sweeps):
        if data.n:
            _update_all_memberships(state, data, rng)
        counts = _class_count_cache(state, data)
        gibbs_update_pi(state, prior, rng)
        for j in range(n_items):
            if not config.unrestricted:
                if v_mode == V_FIXED_ZERO:
                    gibbs_update_base_class_v0(j, state, data, prior, rng, counts=counts)
                else:
                    _, acc = rj_update_base_class(
                        j, state, data, prior, rng, counts=counts,
                        proposal_correction=config.rj_proposal_correction,
                    )
                    rj_total += 1
                    rj_accept += acc
            _, attempts, fell_back = gibbs_update_theta(
                j, state, data, prior, rng, counts=counts,
                max_attempts=config.max_sample_attempts, return_attempts=True,
                mh_fallback=config.theta_mh_fallback,
            )
            theta_attempts_total += attempts
            theta_attempts_max = max(theta_attempts_max, attempts)
            theta_mh_fallbacks += fell_back
        if v_mode == V_FREE:
            _, acc = metropolis_update_v(state, prior, rng)
            v_total += 1
            v_accept += acc

        main_iter = sweep - config.n_warmup
        if main_iter >= 0 and (main_iter + 1) % config.thin == 0:
            iters.append(main_iter)
            log_joint.append(full_log_joint(state, data, prior))
            vs.append(state.v)
            pis.append(state.pi.copy())
            base_columns.append([state.base.column(j).copy() for j in range(n_items)])
            theta_prime.append([t.copy() for t in state.theta_prime])
            if config.store_c_every and n_retained % config.store_c_every == 0:
                memberships[main_iter] = state.memberships.copy()
            n_retained += 1

    return PosteriorDraws(
        iters=np.asarray(iters, dtype=np.int64),
        log_joint=np.asarray(log_joint, dtype=np.float64),
        v=np.asarray(vs, dtype=np.float64),
        pi=np.asarray(pis, dtype=np.float64),
        base_columns=base_columns,
        theta_prime=theta_prime,
        memberships=memberships,
        stats={
            "chain_index": chain_index,
            "rj_accept_rate": rj_accept / rj_total if rj_total else None,
            "v_accept_rate": v_accept / v_total if v_total else None,
            "theta_attempts_total": theta_attempts_total,
            "theta_attempts_max": theta_attempts_max,
            "theta_mh_fallbacks": theta_mh_fallbacks,
        },
    )


def concat_draws(chains) -> PosteriorDraws:
    """Pool retained draws of several chains into one container."""
    if not chains:
        raise ValueError("no chains to concatenate")
    return PosteriorDraws(
        iters=np.concatenate([d.iters for d in chains]),
        log_joint=np.concatenate([d.log_joint for d in chains]),
        v=np.concatenate([d.v for d in chains]),
        pi=np.concatenate([d.pi for d in chains], axis=0),
        base_columns=[cols for d in chains for cols in d.base_columns],
        theta_prime=[tp for d in chains for tp in d.theta_prime],
        stats={"chains": [d.stats for d in chains]},
    )


def _run_chain_worker(args):
    data, prior, config, chain_index = args
    return run_chain(data, prior, config, chain_index=chain_index)


def run_chains(data, prior, config, n_threads=None):
    """Run ``config.n_chains`` independent chains, in parallel when allowed.

    Chain k is seeded as ``config.seed ^ k``. File output is left to the
    caller so that all writes happen in one place.
    """
    if config.n_chains == 1:
        return [run_chain(data, prior, config, chain_index=0)]
    if n_threads is None:
        import os

        n_threads = int(os.environ.get("ESRLCM_THREADS", os.cpu_count() or 1))
    n_workers = max(1, min(n_threads, config.n_chains))
    args = [(data, prior, config, k) for k in range(config.n_chains)]
    if n_workers == 1:
        return [_run_chain_worker(a) for a in args]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(_run_chain_worker, args))
