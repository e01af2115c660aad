"""Histogram-matched subset selection.

Each feature's reference distribution is cut into equal-frequency bins, and a
subset of candidates is chosen whose per-feature bin histograms match the
reference proportions. The mismatch is the mean over features of the L1
distance between the subset's normalised histogram and the target proportions:

    J(S) = (1/F) * sum_f sum_b | h_fb(S) / |S| - p_fb |

Two solvers are provided. ``exact`` is a depth-first branch-and-bound over
inclusion decisions, meant for small instances (M <= 25). ``heuristic`` is
greedy construction followed by first-improvement 1-swap local search. Both
honour optional per-group (min, max) quotas.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import DegenerateFeatureWarning, ExactTooLarge, InfeasibleQuotas

EXACT_MAX_CANDIDATES = 25
_TIE = 1e-12


@dataclass(frozen=True)
class BinEdges:
    """Per-feature interior cut points and reference bin proportions.

    A value ``v`` falls in bin ``b`` = number of cuts strictly below ``v``, so
    bins are ``(-inf, c_1], (c_1, c_2], ..., (c_{B-1}, inf)``. Degenerate
    (constant) features have no cuts and one bin with proportion 1.
    """

    cuts: tuple
    proportions: tuple
    degenerate: tuple

    @property
    def n_features(self):
        return len(self.cuts)

    @property
    def n_bins(self):
        return max(len(p) for p in self.proportions)

    def assign(self, X):
        """Bin labels, shape ``(n, F)``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        labels = np.zeros(X.shape, dtype=np.int64)
        for f, cuts in enumerate(self.cuts):
            if len(cuts):
                labels[:, f] = np.searchsorted(cuts, X[:, f], side="left")
        return labels

    def target_matrix(self):
        """Proportions padded to ``(F, B_max)`` with zeros."""
        out = np.zeros((self.n_features, self.n_bins))
        for f, p in enumerate(self.proportions):
            out[f, :len(p)] = p
        return out


def build_bins(reference, n_bins=10):
    """Equal-frequency bins of each reference feature (linearly interpolated quantiles)."""
    ref = check_array(reference, dtype=np.float64, ensure_min_samples=1)
    k, n_feat = ref.shape
    if n_bins < 2:
        raise ValueError(f"need at least 2 bins, got {n_bins}")
    if k < n_bins:
        raise ValueError(f"reference has {k} rows, fewer than {n_bins} bins")
    qs = np.arange(1, n_bins) / n_bins
    cuts, props, degenerate = [], [], []
    for f in range(n_feat):
        col = ref[:, f]
        if np.all(col == col[0]):
            warnings.warn(f"reference feature {f} is constant; using a single bin",
                          DegenerateFeatureWarning, stacklevel=2)
            cuts.append(np.empty(0))
            props.append(np.ones(1))
            degenerate.append(True)
            continue
        c = np.quantile(col, qs, method="linear")
        c.setflags(write=False)
        counts = np.bincount(np.searchsorted(c, col, side="left"), minlength=n_bins)
        p = counts / k
        p.setflags(write=False)
        cuts.append(c)
        props.append(p)
        degenerate.append(False)
    return BinEdges(tuple(cuts), tuple(props), tuple(degenerate))


def _objective_from_counts(counts, size, target, active):
    if not active.any():
        return 0.0
    dev = np.abs(counts[active] / size - target[active]).sum(axis=1)
    return float(dev.sum() / active.sum())


def per_feature_deviation(selection, bins):
    labels = bins.assign(selection)
    target = bins.target_matrix()
    counts = _counts(labels, target.shape[1])
    dev = np.abs(counts / len(labels) - target).sum(axis=1)
    dev[np.asarray(bins.degenerate)] = 0.0
    return dev


def evaluate_objective(selection, bins):
    """Mean-over-features L1 histogram mismatch of the rows in ``selection``; in [0, 2]."""
    sel = np.atleast_2d(np.asarray(selection, dtype=np.float64))
    if sel.shape[0] == 0:
        raise ValueError("selection is empty")
    labels = bins.assign(sel)
    target = bins.target_matrix()
    active = ~np.asarray(bins.degenerate)
    return _objective_from_counts(_counts(labels, target.shape[1]), len(labels), target, active)


def _counts(labels, n_bins):
    n_feat = labels.shape[1]
    counts = np.zeros((n_feat, n_bins))
    for f in range(n_feat):
        counts[f] = np.bincount(labels[:, f], minlength=n_bins)
    return counts


@dataclass
class SelectionProblem:
    candidates: np.ndarray
    ids: list
    reference: np.ndarray
    target_size: int
    bins_per_feature: int = 10
    groups: list | None = None
    group_quotas: dict | None = None

    def __post_init__(self):
        self.candidates = check_array(self.candidates, dtype=np.float64)
        self.reference = check_array(self.reference, dtype=np.float64)
        m = len(self.candidates)
        self.ids = [str(i) for i in self.ids]
        if len(self.ids) != m:
            raise ValueError(f"{len(self.ids)} ids for {m} candidates")
        if len(set(self.ids)) != m:
            raise ValueError("candidate ids must be unique")
        if self.candidates.shape[1] != self.reference.shape[1]:
            raise ValueError("candidates and reference have different feature counts")
        if not 1 <= self.target_size <= m:
            raise ValueError(f"target size {self.target_size} outside [1, {m}]")
        if self.bins_per_feature < 2:
            raise ValueError("bins_per_feature must be >= 2")
        if self.groups is None:
            self.groups = [""] * m
        self.groups = [str(g) for g in self.groups]
        if len(self.groups) != m:
            raise ValueError(f"{len(self.groups)} group tags for {m} candidates")
        check_quotas(self.groups, self.group_quotas, self.target_size)


def check_quotas(groups, quotas, n_select):
    """Raise InfeasibleQuotas unless some subset of size ``n_select`` meets every quota."""
    if not quotas:
        return
    avail = {}
    for g in groups:
        avail[g] = avail.get(g, 0) + 1
    lo_total, hi_total = 0, 0
    for g, (lo, hi) in quotas.items():
        if lo < 0 or hi < lo:
            raise InfeasibleQuotas(f"group {g!r}: bad quota ({lo}, {hi})")
        if lo > avail.get(g, 0):
            raise InfeasibleQuotas(f"group {g!r} needs {lo} but has {avail.get(g, 0)} candidates")
        lo_total += lo
        hi_total += min(hi, avail.get(g, 0))
    hi_total += sum(n for g, n in avail.items() if g not in quotas)
    if lo_total > n_select:
        raise InfeasibleQuotas(f"quota minimums sum to {lo_total} > target size {n_select}")
    if hi_total < n_select:
        raise InfeasibleQuotas(f"quota maximums admit at most {hi_total} < target size {n_select}")


@dataclass
class SelectionResult:
    selected: tuple
    objective: float
    solver: str
    iterations: int
    per_feature_deviation: np.ndarray = field(repr=False)
    objective_trace: list = field(default_factory=list, repr=False)

    def report(self):
        return {
            "objective": self.objective,
            "solver": self.solver,
            "iterations": self.iterations,
            "per_feature_deviation": [float(v) for v in self.per_feature_deviation],
        }


class _Instance:
    """Candidates sorted by id, with bin labels and quota bookkeeping."""

    def __init__(self, problem, bins):
        order = sorted(range(len(problem.ids)), key=lambda i: problem.ids[i])
        self.ids = [problem.ids[i] for i in order]
        self.rows = problem.candidates[order]
        self.labels = bins.assign(self.rows)
        self.target = bins.target_matrix()
        self.active = ~np.asarray(bins.degenerate)
        self.n_active = int(self.active.sum())
        self.n = problem.target_size
        self.m = len(order)
        quotas = problem.group_quotas or {}
        names = sorted(quotas)
        gindex = {g: i for i, g in enumerate(names)}
        # -1 marks a group without quota
        self.group = np.array([gindex.get(problem.groups[i], -1) for i in order])
        self.q_lo = np.array([quotas[g][0] for g in names], dtype=np.int64)
        self.q_hi = np.array([quotas[g][1] for g in names], dtype=np.int64)

    def objective(self, idx):
        counts = _counts(self.labels[list(idx)], self.target.shape[1])
        return _objective_from_counts(counts, len(idx), self.target, self.active)

    def result(self, idx, solver, iterations, trace):
        idx = sorted(idx)
        dev = np.abs(_counts(self.labels[idx], self.target.shape[1]) / len(idx) - self.target).sum(axis=1)
        dev[~self.active] = 0.0
        return SelectionResult(tuple(self.ids[i] for i in idx), self.objective(idx), solver,
                               iterations, dev, trace)


def _solve_exact(inst):
    m, n = inst.m, inst.n
    feats = [f for f in range(inst.labels.shape[1]) if inst.active[f]]
    n_feat = max(len(feats), 1)
    lab = [[int(inst.labels[i, f]) for f in feats] for i in range(m)]
    tgt = [[float(v) for v in inst.target[f]] for f in feats]
    n_bins = [len(t) for t in tgt]
    counts = [[0] * nb for nb in n_bins]
    # suffix[i][f][b]: candidates at positions >= i whose feature f lies in bin b
    suffix = [[[0] * nb for nb in n_bins] for _ in range(m + 1)]
    for i in range(m - 1, -1, -1):
        for f, nb in enumerate(n_bins):
            suffix[i][f] = list(suffix[i + 1][f])
            suffix[i][f][lab[i][f]] += 1
    group = [int(g) for g in inst.group]
    n_groups = len(inst.q_lo)
    q_lo, q_hi = inst.q_lo.tolist(), inst.q_hi.tolist()
    g_count = [0] * n_groups
    g_left = [[0] * n_groups for _ in range(m + 1)]
    for i in range(m - 1, -1, -1):
        g_left[i] = list(g_left[i + 1])
        if group[i] >= 0:
            g_left[i][group[i]] += 1

    def leaf_value():
        total = 0.0
        for cf, tf in zip(counts, tgt):
            total += sum(abs(c / n - p) for c, p in zip(cf, tf))
        return total / n_feat

    def lower_bound(i):
        # per feature: final mismatch is twice the overfill and twice the
        # underfill; overfill cannot shrink, underfill is capped by what remains
        total = 0.0
        for f, tf in enumerate(tgt):
            cf, avail = counts[f], suffix[i][f]
            over = under = 0.0
            for b, p in enumerate(tf):
                over += max(0.0, cf[b] / n - p)
                under += max(0.0, p - (cf[b] + avail[b]) / n)
            total += 2.0 * max(over, under)
        return total / n_feat

    def feasible(i, k):
        if m - i < n - k:
            return False
        deficit = 0
        for g in range(n_groups):
            if g_count[g] > q_hi[g] or g_count[g] + g_left[i][g] < q_lo[g]:
                return False
            deficit += max(0, q_lo[g] - g_count[g])
        return deficit <= n - k

    best = [np.inf, None]
    chosen = []
    nodes = [0]

    def dfs(i, k):
        nodes[0] += 1
        if k == n:
            if any(c < lo for c, lo in zip(g_count, q_lo)):
                return
            val = leaf_value()
            if val < best[0] - _TIE:
                best[0], best[1] = val, list(chosen)
            return
        if not feasible(i, k) or lower_bound(i) > best[0] - _TIE:
            return
        g = group[i]
        if g < 0 or g_count[g] < q_hi[g]:
            for f, b in enumerate(lab[i]):
                counts[f][b] += 1
            if g >= 0:
                g_count[g] += 1
            chosen.append(i)
            dfs(i + 1, k + 1)
            chosen.pop()
            if g >= 0:
                g_count[g] -= 1
            for f, b in enumerate(lab[i]):
                counts[f][b] -= 1
        dfs(i + 1, k)

    dfs(0, 0)
    if best[1] is None:
        raise InfeasibleQuotas("no subset satisfies the group quotas")
    return best[1], nodes[0]


def _add_scores(counts, size, target, labels, active):
    """Objective after adding each row of ``labels`` to a set with ``counts`` of ``size``."""
    base = np.abs(counts / size - target)
    delta = np.abs((counts + 1) / size - target) - base
    base_sum = base.sum(axis=1)
    feats = np.flatnonzero(active)
    if len(feats) == 0:
        return np.zeros(len(labels))
    total = np.zeros(len(labels))
    for f in feats:
        total += base_sum[f] + delta[f, labels[:, f]]
    return total / len(feats)


def _greedy_start(inst):
    m, n = inst.m, inst.n
    counts = np.zeros_like(inst.target)
    selected = np.zeros(m, dtype=bool)
    n_groups = len(inst.q_lo)
    g_count = np.zeros(n_groups, dtype=np.int64)
    in_quota = inst.group >= 0
    for k in range(n):
        allowed = ~selected
        if n_groups:
            deficit = np.maximum(inst.q_lo - g_count, 0)
            full = np.zeros(m, dtype=bool)
            full[in_quota] = g_count[inst.group[in_quota]] >= inst.q_hi[inst.group[in_quota]]
            allowed &= ~full
            # a pick that serves no deficit must leave room for all of them
            if deficit.sum() > n - k - 1:
                serves = np.zeros(m, dtype=bool)
                serves[in_quota] = deficit[inst.group[in_quota]] > 0
                allowed &= serves
        if not allowed.any():
            raise InfeasibleQuotas("greedy construction ran out of admissible candidates")
        scores = _add_scores(counts, k + 1, inst.target, inst.labels, inst.active)
        scores = np.where(allowed, np.round(scores, 12), np.inf)
        pick = int(np.argmin(scores))
        selected[pick] = True
        counts[np.arange(counts.shape[0]), inst.labels[pick]] += 1
        if in_quota[pick]:
            g_count[inst.group[pick]] += 1
    return selected


def _random_start(inst, rng):
    selected = np.zeros(inst.m, dtype=bool)
    g_count = np.zeros(len(inst.q_lo), dtype=np.int64)
    for g, lo in enumerate(inst.q_lo):
        pool = np.flatnonzero(inst.group == g)
        selected[rng.choice(pool, size=lo, replace=False)] = True
        g_count[g] = lo
    need = inst.n - int(selected.sum())
    for i in rng.permutation(np.flatnonzero(~selected)):
        if need == 0:
            break
        g = inst.group[i]
        if g >= 0 and g_count[g] >= inst.q_hi[g]:
            continue
        selected[i] = True
        if g >= 0:
            g_count[g] += 1
        need -= 1
    return selected


def _local_search(inst, selected, rng, cap):
    """First-improvement 1-swap descent; returns (selected, swaps, objective trace)."""
    n = inst.n
    rows = np.arange(inst.target.shape[0])
    counts = _counts(inst.labels[selected], inst.target.shape[1])
    n_groups = len(inst.q_lo)
    g_count = np.bincount(inst.group[selected & (inst.group >= 0)], minlength=n_groups)
    current = _objective_from_counts(counts, n, inst.target, inst.active)
    trace = [current]
    swaps = 0
    improved = True
    while improved and swaps < cap:
        improved = False
        in_pool = rng.permutation(np.flatnonzero(~selected))
        if len(in_pool) == 0:
            break
        for s in rng.permutation(np.flatnonzero(selected)):
            reduced = counts.copy()
            reduced[rows, inst.labels[s]] -= 1
            scores = _add_scores(reduced, n, inst.target, inst.labels[in_pool], inst.active)
            ok = scores < current - _TIE
            if n_groups:
                gs = inst.group[s]
                gc = inst.group[in_pool]
                leave_ok = gs < 0 or g_count[gs] - 1 >= inst.q_lo[gs]
                enter_ok = np.ones(len(in_pool), dtype=bool)
                q = gc >= 0
                enter_ok[q] = g_count[gc[q]] + 1 <= inst.q_hi[gc[q]]
                ok &= (gc == gs) | (enter_ok & leave_ok)
            hits = np.flatnonzero(ok)
            if len(hits) == 0:
                continue
            c = in_pool[hits[0]]
            selected[s], selected[c] = False, True
            counts = reduced
            counts[rows, inst.labels[c]] += 1
            if n_groups:
                if inst.group[s] >= 0:
                    g_count[inst.group[s]] -= 1
                if inst.group[c] >= 0:
                    g_count[inst.group[c]] += 1
            current = _objective_from_counts(counts, n, inst.target, inst.active)
            trace.append(current)
            swaps += 1
            improved = True
            break
    return selected, swaps, trace


def _solve_heuristic(inst, seed, max_swaps, restarts):
    rng = np.random.default_rng(seed)
    cap = max_swaps if max_swaps is not None else 50 * inst.m
    best = None
    iterations = inst.n
    for run in range(restarts + 1):
        start = _greedy_start(inst) if run == 0 else _random_start(inst, rng)
        selected, swaps, trace = _local_search(inst, start, rng, cap)
        iterations += swaps
        idx = list(np.flatnonzero(selected))
        # later runs must win strictly; the greedy run is kept on ties
        if best is None or trace[-1] < best[0] - _TIE:
            best = (trace[-1], idx, trace)
    return best[1], iterations, best[2]


def solve(problem, mode="heuristic", seed=0, bins=None, max_swaps=None, restarts=10):
    """Pick ``problem.target_size`` candidates minimising the histogram mismatch.

    ``exact`` returns a global optimum (ties go to the lexicographically
    smallest sorted id list). ``heuristic`` runs greedy construction (ties to
    the smallest id) then first-improvement swaps, followed by ``restarts``
    further swap descents from random quota-feasible subsets; the best run is
    returned. Scan orders and restarts are drawn from ``seed``. ``max_swaps``
    caps the swaps of each descent (default ``50 * M``).
    """
    if bins is None:
        bins = build_bins(problem.reference, problem.bins_per_feature)
    inst = _Instance(problem, bins)
    if mode == "exact":
        if inst.m > EXACT_MAX_CANDIDATES:
            raise ExactTooLarge(
                f"exact solver handles at most {EXACT_MAX_CANDIDATES} candidates, got {inst.m}"
            )
        idx, nodes = _solve_exact(inst)
        return inst.result(idx, "exact", nodes, [inst.objective(idx)])
    if mode == "heuristic":
        idx, iters, trace = _solve_heuristic(inst, seed, max_swaps, restarts)
        return inst.result(idx, "heuristic", iters, trace)
    raise ValueError(f"unknown mode {mode!r}")


class HistogramMatchingSampler(BaseEstimator):
    """Estimator wrapper: ``fit`` bins a reference corpus, ``select`` picks a subset.

    After ``select`` the boolean mask over the passed candidates is in
    ``support_`` and the full result in ``result_``.
    """

    def __init__(self, n_select=10, n_bins=10, quotas=None, mode="heuristic", seed=0,
                 max_swaps=None, restarts=10):
        self.n_select = n_select
        self.n_bins = n_bins
        self.quotas = quotas
        self.mode = mode
        self.seed = seed
        self.max_swaps = max_swaps
        self.restarts = restarts

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.reference_ = X
        self.bins_ = build_bins(X, self.n_bins)
        self.n_features_in_ = X.shape[1]
        return self

    def select(self, X, ids=None, groups=None):
        check_is_fitted(self, "bins_")
        X = check_array(X, dtype=np.float64)
        if ids is None:
            ids = [f"{i:06d}" for i in range(len(X))]
        problem = SelectionProblem(X, list(ids), self.reference_, self.n_select, self.n_bins,
                                   groups, self.quotas)
        self.result_ = solve(problem, self.mode, self.seed, self.bins_, self.max_swaps,
                             self.restarts)
        chosen = set(self.result_.selected)
        self.support_ = np.array([str(i) in chosen for i in problem.ids])
        return self.result_

    def score(self, X, y=None):
        """Negative mismatch of ``X`` taken as a whole against the fitted reference."""
        check_is_fitted(self, "bins_")
        return -evaluate_objective(X, self.bins_)
