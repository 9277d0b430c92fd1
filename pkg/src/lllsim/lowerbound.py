"""Adversarial lower-bound harness.

The hard construction: k basis tasks along coordinate axes in R^{k+1},
answered by a worst-case-but-valid learner that tilts every estimate into
the one spare coordinate. Random follow-up tasks are Bernoulli combinations
of the axes. The harness verifies the geometry (closed-form subspace angle,
high-probability angle lower bound for new tasks), the subset-selection
procedure behind the argument, and the sample-cost accounting whose
minimum over allocations is d k^{1.5} / eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Subspace, orthonormalize, principal_angles
from .learner import adversarial_learn
from .synthetic import rng_substream

# substream namespaces (disjoint from the synthetic module's 0..3)
_NS_PATTERNS = 10
_NS_TRIALS = 11

_EXHAUSTIVE_CAP = 18  # 2^18 patterns is the largest exhaustive sweep allowed


@dataclass(frozen=True)
class LowerBoundInstance:
    """The hard task sequence: axis tasks plus Bernoulli combination tasks."""

    k: int
    d: int  # always k + 1: one spare coordinate for the adversary
    basis_tasks: np.ndarray  # (k, d) rows e_1..e_k
    random_tasks: np.ndarray  # (n_random, d) normalized 0/1 combinations
    patterns: np.ndarray  # (n_random, k) the Bernoulli draws
    eps_vector: np.ndarray  # (k,) per-basis-task learner accuracy
    S: tuple  # coordinate subset the combinations are supported on
    seed: int

    def __post_init__(self):
        if self.d != self.k + 1:
            raise ValueError("instance uses d = k + 1")
        if np.any(self.eps_vector < 0.0) or np.any(self.eps_vector >= 0.5):
            raise ValueError("eps entries must lie in [0, 1/2)")
        outside = [j for j in range(self.k) if j not in set(self.S)]
        if outside and self.random_tasks.size:
            if np.max(np.abs(self.random_tasks[:, outside])) > 0.0:
                raise ValueError("random tasks must be supported on S")

    def adversarial_estimates(self) -> np.ndarray:
        """What the worst-case learner returns for each basis task."""
        out = np.empty((self.k, self.d))
        for i in range(self.k):
            out[i] = adversarial_learn(
                self.basis_tasks[i], float(self.eps_vector[i]), self.k
            )
        return out

    def adversarial_span(self) -> Subspace:
        """Span of the estimates for the subset S."""
        est = self.adversarial_estimates()
        return orthonormalize([est[i] for i in self.S])


@dataclass(frozen=True)
class AngleStats:
    angles: np.ndarray
    threshold: float
    fraction_exceeding: float
    bound: float  # 1 - exp(-|S|/128)


@dataclass(frozen=True)
class SubsetReport:
    S: tuple
    p: float
    C: float
    gamma: float
    iterations: int

    def __post_init__(self):
        if not (0.0 < self.p < 1.0) or self.C <= 1.0:
            raise ValueError("need 0 < p < 1 and C > 1")
        if len(self.S) == 0:
            raise ValueError("subset may not be empty")


@dataclass(frozen=True)
class LedgerReport:
    basis_cost: float
    new_task_cost: float
    total: float
    feasible: bool  # adversarial angle of the allocation within eps_target
    holder_bound: float  # d * k^1.5 / eps_target
    holder_ok: bool  # basis_cost >= holder_bound whenever sum eps_i^2 <= eps^2


def build_instance(
    k: int, n_random: int, seed: int, eps_vector, subset=None
) -> LowerBoundInstance:
    """Deterministic hard instance in R^{k+1}; zero Bernoulli draws redrawn."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if n_random < 0:
        raise ValueError("n_random must be >= 0")
    eps = np.asarray(eps_vector, dtype=float).ravel()
    if eps.shape != (k,):
        raise ValueError(f"eps_vector must have length {k}")
    if np.any(eps <= 0.0) or np.any(eps >= 0.5):
        raise ValueError("eps entries must lie in (0, 1/2)")
    S = tuple(range(k)) if subset is None else tuple(sorted(set(subset)))
    if not S or any(i < 0 or i >= k for i in S):
        raise ValueError("subset must be a nonempty subset of range(k)")
    d = k + 1
    rng = rng_substream(seed, _NS_PATTERNS)
    patterns = np.zeros((n_random, k))
    tasks = np.zeros((n_random, d))
    cols = list(S)
    for j in range(n_random):
        row = rng.integers(0, 2, size=len(cols))
        while not row.any():
            row = rng.integers(0, 2, size=len(cols))
        patterns[j, cols] = row
        tasks[j, cols] = row / math.sqrt(float(row.sum()))
    basis = np.eye(k, d)
    return LowerBoundInstance(
        k=k,
        d=d,
        basis_tasks=basis,
        random_tasks=tasks,
        patterns=patterns,
        eps_vector=eps,
        S=S,
        seed=seed,
    )


def adversarial_subspace_angle(eps_vector) -> float:
    """Largest principal angle the adversary can force on the basis tasks.

    Tilting each axis estimate by eps_i into the spare coordinate makes the
    learned span the graph of x -> <eps, x>, whose largest principal angle
    to the true span is arctan(||eps||).
    """
    eps = np.asarray(eps_vector, dtype=float).ravel()
    if eps.size == 0:
        raise ValueError("eps_vector must be nonempty")
    if np.any(eps < 0.0) or np.any(eps >= 0.5):
        raise ValueError("eps entries must lie in [0, 1/2)")
    k = eps.size
    d = k + 1
    est = [adversarial_learn(np.eye(d)[i], float(eps[i]), k) for i in range(k)]
    V = orthonormalize(est)
    U = orthonormalize([np.eye(d)[i] for i in range(k)])
    return principal_angles(V, U).max


def _angles_for_patterns(instance: LowerBoundInstance, patterns: np.ndarray):
    B = instance.adversarial_span().basis  # (d, |S|)
    tasks = patterns / np.sqrt(patterns.sum(axis=1))[:, None]
    full = np.zeros((patterns.shape[0], instance.d))
    full[:, : instance.k] = tasks
    resid = full - (full @ B) @ B.T
    s = np.clip(np.linalg.norm(resid, axis=1), 0.0, 1.0)
    return np.arcsin(s)


def _check_balance(instance: LowerBoundInstance) -> float:
    eps_S = instance.eps_vector[list(instance.S)]
    rms = math.sqrt(float(np.sum(eps_S**2)) / len(instance.S))
    if np.any(eps_S > 2.0 * rms + 1e-12):
        worst = float(eps_S.max())
        raise ValueError(
            f"balance condition violated: max eps {worst} exceeds 2*RMS {2 * rms}"
        )
    return math.sqrt(float(np.sum(eps_S**2)))


def new_task_angle_stats(
    instance: LowerBoundInstance, trials: int | None = None
) -> AngleStats:
    """Angles of Bernoulli combination tasks to the adversarially learned span.

    With `trials` given, draws that many fresh patterns from a dedicated
    substream; otherwise evaluates the instance's own random tasks.
    Requires the balance condition on eps over S. The exceedance threshold
    is (1/16) * sqrt(sum of eps_i^2 over S), counted inclusively.
    """
    norm_S = _check_balance(instance)
    if trials is None:
        if instance.patterns.shape[0] == 0:
            raise ValueError("instance has no random tasks; pass trials")
        patterns = instance.patterns
    else:
        if trials < 1:
            raise ValueError("trials must be >= 1")
        rng = rng_substream(instance.seed, _NS_TRIALS)
        cols = list(instance.S)
        patterns = np.zeros((trials, instance.k))
        for j in range(trials):
            row = rng.integers(0, 2, size=len(cols))
            while not row.any():
                row = rng.integers(0, 2, size=len(cols))
            patterns[j, cols] = row
    angles = _angles_for_patterns(instance, patterns)
    threshold = norm_S / 16.0
    frac = float(np.mean(angles >= threshold))
    bound = 1.0 - math.exp(-len(instance.S) / 128.0)
    return AngleStats(
        angles=angles, threshold=threshold, fraction_exceeding=frac, bound=bound
    )


def exhaustive_angle_stats(instance: LowerBoundInstance) -> AngleStats:
    """Same statistic over every nonzero pattern on S (small |S| only)."""
    norm_S = _check_balance(instance)
    s = len(instance.S)
    if s > _EXHAUSTIVE_CAP:
        raise ValueError(f"exhaustive enumeration capped at |S| <= {_EXHAUSTIVE_CAP}")
    cols = list(instance.S)
    ids = np.arange(1, 2**s, dtype=np.int64)
    bits = (ids[:, None] >> np.arange(s)) & 1
    patterns = np.zeros((ids.size, instance.k))
    patterns[:, cols] = bits.astype(float)
    angles = _angles_for_patterns(instance, patterns)
    threshold = norm_S / 16.0
    frac = float(np.mean(angles >= threshold))
    bound = 1.0 - math.exp(-s / 128.0)
    return AngleStats(
        angles=angles, threshold=threshold, fraction_exceeding=frac, bound=bound
    )


def adversarial_combination(instance: LowerBoundInstance, pattern) -> np.ndarray:
    """Adversarial answer for a combination task: the nearest unit vector
    inside the already-learned span, so the span never grows."""
    pattern = np.asarray(pattern, dtype=float).ravel()
    if pattern.shape != (instance.k,) or not pattern.any():
        raise ValueError("pattern must be a nonzero 0/1 vector of length k")
    a = np.zeros(instance.d)
    a[: instance.k] = pattern / math.sqrt(float(pattern.sum()))
    B = instance.adversarial_span().basis
    proj = B @ (B.T @ a)
    nrm = np.linalg.norm(proj)
    if nrm == 0.0:
        raise ValueError("task orthogonal to the learned span")
    return proj / nrm


def find_balanced_subset(b, p: float, C: float) -> SubsetReport:
    """Filter to a subset on which no entry exceeds gamma times the RMS.

    Repeatedly drops entries above gamma * RMS of the survivors, with
    gamma = sqrt((1/p) ln(C^2/(1-p))). For inputs satisfying b_i >= mean/C
    the fixpoint keeps at least (1-p) k entries.
    """
    b = np.asarray(b, dtype=float).ravel()
    if b.size == 0 or np.any(b < 0.0):
        raise ValueError("b must be nonempty and nonnegative")
    if not (0.0 < p < 1.0):
        raise ValueError("p must be in (0, 1)")
    if C <= 1.0:
        raise ValueError("C must exceed 1")
    mean = float(b.mean())
    if np.any(b < mean / C - 1e-12):
        raise ValueError("hypothesis violated: some entry is below mean/C")
    gamma = math.sqrt((1.0 / p) * math.log(C * C / (1.0 - p)))
    S = list(range(b.size))
    iterations = 0
    while True:
        iterations += 1
        vals = b[S]
        thresh = gamma * math.sqrt(float(np.sum(vals**2)) / len(S))
        kept = [i for i in S if b[i] <= thresh]
        if len(kept) == len(S):
            break
        S = kept
    return SubsetReport(S=tuple(S), p=p, C=C, gamma=gamma, iterations=iterations)


def allocation_cost(d: int, k: int, allocation, eps_target: float, n_random: int):
    """Pure cost arithmetic: basis tasks at d/eps_i each, new tasks at k/eps."""
    alloc = np.asarray(allocation, dtype=float).ravel()
    if alloc.size != k or np.any(alloc <= 0.0):
        raise ValueError("allocation must give a positive eps to each basis task")
    if eps_target <= 0.0:
        raise ValueError("eps_target must be positive")
    basis = float(d * np.sum(1.0 / alloc))
    new = float(n_random) * k / eps_target
    return basis, new


def sample_complexity_ledger(
    instance: LowerBoundInstance, eps_target: float, allocation
) -> LedgerReport:
    """Cost of an allocation and whether it beats the Holder floor.

    An allocation succeeds only if the adversarial angle it leaves,
    arctan of the norm of its S-restriction, is within eps_target; any
    such allocation has sum of squares <= tan(eps)^2 and therefore basis
    cost >= d k^1.5 / eps up to the tan/identity slack.
    """
    alloc = np.asarray(allocation, dtype=float).ravel()
    basis, new = allocation_cost(
        instance.d, instance.k, alloc, eps_target, instance.random_tasks.shape[0]
    )
    angle = math.atan(float(np.linalg.norm(alloc[list(instance.S)])))
    feasible = bool(angle <= eps_target)
    bound = instance.d * instance.k**1.5 / eps_target
    budget_ok = float(np.sum(alloc**2)) <= eps_target * eps_target + 1e-15
    holder_ok = bool(basis >= bound * (1.0 - 1e-12)) if budget_ok else True
    return LedgerReport(
        basis_cost=basis,
        new_task_cost=new,
        total=basis + new,
        feasible=feasible,
        holder_bound=bound,
        holder_ok=holder_ok,
    )
