"""Planted problems and labeled samples under standard-Gaussian inputs.

A problem plants m unit task vectors a_i = normalize(W*^T c*_i) inside the
k-dimensional row space of W*. Inputs are standard Gaussian, labels are the
halfspace sign, and because the Gaussian is rotationally symmetric every
error probability is the exact angle formula theta/pi, so no test-set noise
anywhere downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_UNIT_TOL = 1e-8
_MC_CHUNK = 1 << 18

# Substream namespaces: one per independent purpose so parallel trials and
# repeated batches never share generator state.
NS_PROBLEM = 0
NS_BATCH = 1
NS_MC = 2
NS_JOINT = 3


def rng_substream(seed: int, *path: int) -> np.random.Generator:
    """Independent counter-based generator for (seed, path...)."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *path])))


@dataclass(frozen=True)
class GroundTruth:
    """A planted lifelong-learning problem."""

    W_star: np.ndarray  # (k, d) hidden feature directions
    C_star: np.ndarray  # (m, k) per-task combination weights
    a: np.ndarray  # (m, d) unit task vectors, a_i = normalize(W_star.T @ C_star[i])
    d: int
    k: int
    m: int
    seed: int

    def __post_init__(self):
        if self.W_star.shape != (self.k, self.d):
            raise ValueError("W_star shape mismatch")
        if self.C_star.shape != (self.m, self.k):
            raise ValueError("C_star shape mismatch")
        if self.a.shape != (self.m, self.d):
            raise ValueError("a shape mismatch")
        norms = np.linalg.norm(self.a, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("task vectors must be unit norm")


@dataclass(frozen=True)
class LabeledSample:
    x: np.ndarray
    y: int  # +1 or -1


@dataclass
class SampleBatch:
    """A batch of labeled samples, stored as arrays, iterable as samples."""

    x: np.ndarray  # (n, d)
    y: np.ndarray  # (n,) of +/-1

    def __len__(self) -> int:
        return self.x.shape[0]

    def __getitem__(self, i: int) -> LabeledSample:
        return LabeledSample(x=self.x[i], y=int(self.y[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


@dataclass
class TaskStream:
    """Deterministic per-task sample streams over one ground truth."""

    ground_truth: GroundTruth
    order: tuple  # permutation of task indices 0..m-1
    rng_seed: int
    _batch_counters: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        m = self.ground_truth.m
        if sorted(self.order) != list(range(m)):
            raise ValueError("order must be a permutation of range(m)")


def generate_problem(d: int, k: int, m: int, seed: int) -> GroundTruth:
    """Draw W*, C* with i.i.d. standard-normal entries and plant the tasks.

    Deterministic per seed. Rows of `a` are normalized; a zero direction
    (probability zero) is replaced by redrawing that row of C*.
    """
    if not (1 <= k <= min(m, d)):
        raise ValueError(f"need 1 <= k <= min(m, d), got k={k}, m={m}, d={d}")
    rng = rng_substream(seed, NS_PROBLEM)
    W = rng.standard_normal((k, d))
    C = rng.standard_normal((m, k))
    A = C @ W
    norms = np.linalg.norm(A, axis=1)
    for i in np.nonzero(norms == 0.0)[0]:
        while norms[i] == 0.0:
            C[i] = rng.standard_normal(k)
            A[i] = C[i] @ W
            norms[i] = np.linalg.norm(A[i])
    A /= norms[:, None]
    return GroundTruth(W_star=W, C_star=C, a=A, d=d, k=k, m=m, seed=seed)


def sample_batch(stream: TaskStream, task: int, n: int) -> SampleBatch:
    """Draw n labeled samples for one task; repeated calls continue the stream."""
    gt = stream.ground_truth
    if not (0 <= task < gt.m):
        raise ValueError(f"task {task} out of range [0, {gt.m})")
    if n < 1:
        raise ValueError("n must be >= 1")
    batch_idx = stream._batch_counters.get(task, 0)
    stream._batch_counters[task] = batch_idx + 1
    rng = rng_substream(stream.rng_seed, NS_BATCH, task, batch_idx)
    x = rng.standard_normal((n, gt.d))
    y = np.where(x @ gt.a[task] >= 0.0, 1, -1)  # ties go to +1
    return SampleBatch(x=x, y=y)


def _check_unit_pair(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.size != v.size:
        raise ValueError("vectors must share a dimension")
    for t in (u, v):
        nrm = np.linalg.norm(t)
        if abs(nrm - 1.0) > _UNIT_TOL:
            raise ValueError(f"expected unit vector, got norm {nrm}")
    return u, v


def disagreement_exact(u: np.ndarray, v: np.ndarray) -> float:
    """Probability the two halfspaces disagree on a Gaussian input: theta/pi."""
    u, v = _check_unit_pair(u, v)
    theta = float(np.arccos(np.clip(u @ v, -1.0, 1.0)))
    return theta / np.pi


def disagreement_mc(u: np.ndarray, v: np.ndarray, n: int, seed: int) -> float:
    """Empirical disagreement over n Gaussian draws (deterministic per seed)."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng_substream(seed, NS_MC)
    disagree = 0
    done = 0
    while done < n:
        take = min(_MC_CHUNK, n - done)
        x = rng.standard_normal((take, u.size))
        disagree += int(np.count_nonzero((x @ u >= 0.0) != (x @ v >= 0.0)))
        done += take
    return disagree / n


def task_error_exact(hypothesis: np.ndarray, task: int, gt: GroundTruth) -> float:
    """True generalization error of a unit hypothesis on one task."""
    if not (0 <= task < gt.m):
        raise ValueError(f"task {task} out of range [0, {gt.m})")
    return disagreement_exact(hypothesis, gt.a[task])


def save_problem(gt: GroundTruth, path) -> None:
    """Flat text format: header `d k m seed`, then W* rows, then C* rows."""
    with open(path, "w") as fh:
        fh.write(f"{gt.d} {gt.k} {gt.m} {gt.seed}\n")
        for row in gt.W_star:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")
        for row in gt.C_star:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def load_problem(path) -> GroundTruth:
    with open(path) as fh:
        d, k, m, seed = (int(t) for t in fh.readline().split())
        W = np.array([[float(t) for t in fh.readline().split()] for _ in range(k)])
        C = np.array([[float(t) for t in fh.readline().split()] for _ in range(m)])
    A = C @ W
    A /= np.linalg.norm(A, axis=1)[:, None]
    return GroundTruth(W_star=W, C_star=C, a=A, d=d, k=k, m=m, seed=seed)
