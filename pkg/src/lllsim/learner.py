"""Single-task halfspace learners with explicit sample budgets.

The lifelong drivers treat these as black boxes: each call costs a number
of labeled samples fixed by the budget formula, and the returned hypothesis
either meets the target error or gets caught by the post-hoc check.

The estimator runs in two stages. The empirical sum of y*x points at the
target in expectation (E[y*x] = sqrt(2/pi) * a under Gaussian inputs) but
its angle error only shrinks like sqrt(d/n). Perceptron passes over the
same batch then drive the training mistakes to zero; the consistent
direction generalizes at the ~d/n rate the budget formula is shaped for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Subspace
from .synthetic import GroundTruth, TaskStream, sample_batch, task_error_exact

C_S_DEFAULT = 4.0
_LEARN_CHUNK = 1 << 16
_POLISH_EPOCHS = 64
_POLISH_BLOCK = 256


def budget(dim: int, eps_target: float, c_s: float = C_S_DEFAULT) -> int:
    """Samples allowed for learning one halfspace in `dim` dimensions."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if not (0.0 < eps_target < 0.5):
        raise ValueError(f"eps_target must be in (0, 1/2), got {eps_target}")
    if c_s <= 0.0:
        raise ValueError("c_s must be positive")
    return math.ceil(c_s * dim * math.log(1.0 / eps_target) / eps_target)


@dataclass(frozen=True)
class LearnerBudget:
    samples_allowed: int
    epsilon_target: float

    def __post_init__(self):
        if not (0.0 < self.epsilon_target < 0.5):
            raise ValueError("epsilon_target must be in (0, 1/2)")
        if self.samples_allowed < 1:
            raise ValueError("samples_allowed must be >= 1")

    @classmethod
    def for_dimension(
        cls, dim: int, eps_target: float, c_s: float = C_S_DEFAULT
    ) -> "LearnerBudget":
        return cls(
            samples_allowed=budget(dim, eps_target, c_s), epsilon_target=eps_target
        )


@dataclass(frozen=True)
class Hypothesis:
    """A unit direction plus the sample count it cost to produce."""

    direction: np.ndarray
    samples_used: int

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float).ravel()
        nrm = np.linalg.norm(d)
        if abs(nrm - 1.0) > 1e-8:
            raise ValueError(f"direction must be unit norm, got {nrm}")
        object.__setattr__(self, "direction", d)


def _normalize(v: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        # all-zero accumulator: probability-zero event, pick a fixed direction
        out = np.zeros_like(v)
        out[0] = 1.0
        return out
    return v / nrm


def _count_mistakes(w: np.ndarray, x: np.ndarray, y: np.ndarray) -> int:
    return int(np.count_nonzero((x @ w) * y <= 0.0))


def _polish(w: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Perceptron passes toward a direction consistent with the batch.

    Processes the batch in blocks, adding y*x over each block's mistakes.
    Stops on a mistake-free epoch; keeps the best iterate seen so the
    result never classifies the batch worse than the starting point (the
    batch need not be separable when the target sits outside the basis).
    """
    n = y.size
    best_w = w
    best_bad = _count_mistakes(w, x, y)
    for _ in range(_POLISH_EPOCHS):
        if best_bad == 0:
            break
        updated = False
        for lo in range(0, n, _POLISH_BLOCK):
            xb = x[lo : lo + _POLISH_BLOCK]
            yb = y[lo : lo + _POLISH_BLOCK]
            bad = (xb @ w) * yb <= 0.0
            if bad.any():
                w = w + yb[bad] @ xb[bad]
                updated = True
        if not updated:
            best_w, best_bad = w, 0
            break
        n_bad = _count_mistakes(w, x, y)
        if n_bad < best_bad:
            best_w, best_bad = w, n_bad
    return best_w


def estimate_direction(
    stream: TaskStream, task: int, n: int, basis: np.ndarray | None = None
) -> np.ndarray:
    """Halfspace direction from n labeled samples, optionally in basis coords.

    Stage one accumulates sum(y*x), whose direction is the target in
    expectation. Stage two runs perceptron passes over the drawn batch
    until it is classified without mistakes (or an epoch cap), starting
    from the accumulated sum so the updates refine rather than overwrite
    it. Deterministic given the stream's seed. With `basis` (d, r), inputs
    are reduced to their r coordinates before fitting; labels still come
    from the full-dimensional sample.
    """
    dim = stream.ground_truth.d if basis is None else basis.shape[1]
    acc = np.zeros(dim)
    parts_x = []
    parts_y = []
    done = 0
    while done < n:
        take = min(_LEARN_CHUNK, n - done)
        batch = sample_batch(stream, task, take)
        z = batch.x if basis is None else batch.x @ basis
        acc += batch.y @ z
        parts_x.append(z)
        parts_y.append(batch.y)
        done += take
    if not parts_x:
        return _normalize(acc)
    x = parts_x[0] if len(parts_x) == 1 else np.vstack(parts_x)
    y = parts_y[0] if len(parts_y) == 1 else np.concatenate(parts_y)
    return _normalize(_polish(acc, x, y))


def learn_halfspace(
    stream: TaskStream, task: int, eps_target: float, c_s: float = C_S_DEFAULT
) -> Hypothesis:
    """Learn one task in the full ambient space at its sample budget."""
    n = budget(stream.ground_truth.d, eps_target, c_s)
    return Hypothesis(direction=estimate_direction(stream, task, n), samples_used=n)


def learn_in_feature_space(
    stream: TaskStream,
    task: int,
    V: Subspace,
    eps_target: float,
    c_s: float = C_S_DEFAULT,
) -> Hypothesis:
    """Learn one task restricted to a feature subspace.

    Costs budget(dim V, eps) samples, which is the whole point of keeping a shared
    representation. The returned direction is in V's coordinates; map to the
    ambient space with V.basis @ direction. If the target sits far from V no
    coefficient vector can be good; the caller is expected to check.
    """
    n = budget(V.dim, eps_target, c_s)
    direction = estimate_direction(stream, task, n, basis=V.basis)
    return Hypothesis(direction=direction, samples_used=n)


def check_hypothesis(h: Hypothesis, task: int, gt: GroundTruth, eps: float) -> bool:
    """Exact error check (threshold inclusive). Direction must be ambient."""
    return task_error_exact(h.direction, task, gt) <= eps


def mc_check_cost(eps: float) -> int:
    return math.ceil(32.0 / eps)


def check_hypothesis_mc(
    h: Hypothesis, task: int, gt: GroundTruth, eps: float, rng: np.random.Generator
) -> tuple[bool, int]:
    """Monte-Carlo error check; returns (passed, samples charged)."""
    n_test = mc_check_cost(eps)
    x = rng.standard_normal((n_test, gt.d))
    true_y = x @ gt.a[task] >= 0.0
    hyp_y = x @ h.direction >= 0.0
    frac = float(np.count_nonzero(true_y != hyp_y)) / n_test
    return frac <= eps, n_test


def adversarial_learn(a: np.ndarray, eps_i: float, adv_coord: int) -> np.ndarray:
    """Worst-case-but-valid learner output: tilt `a` by eps_i along one
    coordinate where `a` vanishes. The output stays within distance eps_i
    of the target, so it is a legitimate answer at accuracy eps_i."""
    a = np.asarray(a, dtype=float).ravel()
    if not (0 <= adv_coord < a.size):
        raise ValueError(f"adv_coord {adv_coord} out of range for dimension {a.size}")
    if abs(a[adv_coord]) > 1e-12:
        raise ValueError("target must vanish at the adversarial coordinate")
    if not (0.0 <= eps_i < 1.0):
        raise ValueError(f"eps_i must be in [0, 1), got {eps_i}")
    if eps_i == 0.0:
        return a.copy()
    out = a.copy()
    out[adv_coord] = eps_i
    return out / np.linalg.norm(out)
