"""Quality metrics and reference baselines for inversion results.

The two baselines matter as much as the metrics: rejection sampling gives
distributionally correct pre-images at any tolerance (however slowly), and
gradient descent through an embedder's Jacobian gives point estimates. The
diffusion sampler is judged against both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffusion import SampleConfig, sample_batch
from .embedders import angular_distance
from .errors import (
    AcceptanceStarvationError,
    ConfigurationError,
    DivergenceError,
    NumericalDomainError,
    ShapeError,
)


def _pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix between the rows of a and b."""
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def identity_error(samples, target_y, embedder, metric: str = "euclidean") -> float:
    """Mean distance between the embeddings of the samples and the target."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ShapeError("expected a nonempty (n, d) array of samples")
    target_y = np.asarray(target_y, dtype=np.float64)
    ys = embedder.embed(samples)
    if metric == "euclidean":
        return float(np.mean(np.linalg.norm(ys - target_y, axis=1)))
    if metric == "angular":
        return float(np.mean([angular_distance(y, target_y) for y in ys]))
    raise ConfigurationError(f"unknown metric {metric!r}")


def diversity(samples) -> float:
    """Mean Euclidean distance over all unordered pairs of samples."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ShapeError("diversity needs at least two samples")
    n = samples.shape[0]
    dists = _pairwise_distances(samples, samples)
    iu = np.triu_indices(n, k=1)
    return float(dists[iu].mean())


@dataclass(frozen=True)
class SweepRow:
    """Metrics for one guidance scale, averaged over targets."""

    guidance_scale: float
    identity_error: float
    diversity: float
    n_samples: int


def _cell_seed(base_seed: int, i: int, j: int) -> int:
    """Stable per-cell seed so sweep cells have independent streams."""
    return int(np.random.SeedSequence((base_seed, i, j)).generate_state(1)[0])


def guidance_sweep(model, schedule, embedder, targets, scales, n_per_target: int,
                   base_config: SampleConfig, attrs=None) -> list[SweepRow]:
    """Sample at each guidance scale and measure the fidelity/variety tradeoff.

    targets is an (m, k) array of target embeddings; each (scale, target)
    cell gets its own RNG stream derived from the base seed. identity_error
    and diversity are computed per target and averaged, so diversity measures
    within-target spread, not spread across targets.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    scales = list(scales)
    if not scales:
        raise ConfigurationError("at least one guidance scale is required")
    if n_per_target < 2:
        raise ConfigurationError("n_per_target must be >= 2 to measure diversity")
    rows = []
    for i, s in enumerate(scales):
        errs, divs = [], []
        for j, y in enumerate(targets):
            cfg = SampleConfig(
                seed=_cell_seed(base_config.seed, i, j),
                guidance_scale=float(s),
                respace_steps=base_config.respace_steps,
                threshold=base_config.threshold,
                threshold_percentile=base_config.threshold_percentile,
                variance_mode=base_config.variance_mode,
            )
            a = None if attrs is None else np.asarray(attrs)[j]
            xs = sample_batch(model, y, schedule, cfg, n_per_target, a=a)
            errs.append(identity_error(xs, y, embedder))
            divs.append(diversity(xs))
        rows.append(SweepRow(float(s), float(np.mean(errs)), float(np.mean(divs)),
                             n_per_target * len(targets)))
    return rows


@dataclass(frozen=True)
class VerificationResult:
    """Best threshold found by exhaustive sweep and its accuracy."""

    threshold: float
    accuracy: float
    n_pairs: int


def verification_accuracy(pairs) -> VerificationResult:
    """Optimal same/different accuracy over all distance thresholds.

    pairs is an iterable of (distance, is_same). Candidate thresholds are the
    midpoints between consecutive sorted distances plus one sentinel below
    the minimum and one above the maximum, so the degenerate all-same and
    all-different classifiers are always in the running. A pair counts as
    "same" when its distance is strictly below the threshold. Ties prefer the
    smallest threshold.
    """
    pairs = list(pairs)
    if not pairs:
        raise ConfigurationError("at least one pair is required")
    dists = np.array([float(d) for d, _ in pairs])
    labels = np.array([bool(s) for _, s in pairs])
    uniq = np.unique(dists)
    candidates = np.concatenate((
        [uniq[0] - 1.0],
        (uniq[:-1] + uniq[1:]) / 2.0,
        [uniq[-1] + 1.0],
    ))
    best_acc = -1.0
    best_thr = candidates[0]
    for thr in candidates:
        acc = float(np.mean((dists < thr) == labels))
        if acc > best_acc:
            best_acc = acc
            best_thr = float(thr)
    return VerificationResult(best_thr, best_acc, len(pairs))


def rejection_oracle(embedder, target_y, epsilon: float, draw, n: int, rng,
                     max_draws: int = 1_000_000, batch_size: int = 4096) -> np.ndarray:
    """Exact pre-image sampling by rejection.

    Draws candidates with draw(rng, count) and keeps those whose embedding
    lies within Euclidean epsilon of the target, until n are kept or the draw
    budget is exhausted. Raises a starvation diagnostic (with the observed
    acceptance rate) if nothing at all is kept; a nonempty partial result is
    returned as-is.
    """
    if epsilon < 0:
        raise ConfigurationError(f"epsilon must be nonnegative, got {epsilon}")
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    target_y = np.asarray(target_y, dtype=np.float64)
    kept = []
    n_kept = 0
    drawn = 0
    while n_kept < n and drawn < max_draws:
        count = min(batch_size, max_draws - drawn)
        xs = np.asarray(draw(rng, count), dtype=np.float64)
        drawn += count
        ys = embedder.embed(xs)
        ok = np.linalg.norm(ys - target_y, axis=1) <= epsilon
        if ok.any():
            kept.append(xs[ok])
            n_kept += int(ok.sum())
    if n_kept == 0:
        raise AcceptanceStarvationError(
            f"no draw of {drawn} fell within {epsilon} of the target "
            f"(acceptance rate 0.0)",
            acceptance_rate=0.0,
            n_draws=drawn,
        )
    return np.concatenate(kept)[:n]


@dataclass(frozen=True)
class InversionResult:
    """Endpoint of a gradient-descent inversion run."""

    x: np.ndarray
    loss_trace: np.ndarray
    converged: bool
    n_steps: int


DIVERGENCE_WINDOW = 100


def whitebox_gd_invert(embedder, target_y, x_init, step_size: float = 0.1,
                       max_steps: int = 1000, tol: float = 1e-6) -> InversionResult:
    """Minimize 0.5 ||y - f(x)||^2 by explicit gradient descent.

    Requires the embedder to expose embed_grad. Convergence is declared when
    the embedding residual norm drops below tol; a loss that increases for
    DIVERGENCE_WINDOW consecutive steps raises a divergence diagnostic
    carrying the loss trace.
    """
    if not hasattr(embedder, "embed_grad"):
        raise ConfigurationError("white-box inversion needs an embedder with embed_grad")
    if step_size <= 0:
        raise ConfigurationError(f"step_size must be positive, got {step_size}")
    target_y = np.asarray(target_y, dtype=np.float64)
    x = np.array(x_init, dtype=np.float64)
    trace = []
    rising = 0
    converged = False
    steps_taken = 0
    for _ in range(max_steps):
        resid = target_y - embedder.embed(x)
        loss = 0.5 * float(resid @ resid)
        trace.append(loss)
        if np.linalg.norm(resid) < tol:
            converged = True
            break
        if len(trace) > 1 and trace[-1] > trace[-2]:
            rising += 1
            if rising >= DIVERGENCE_WINDOW:
                raise DivergenceError(
                    f"loss rose for {rising} consecutive steps; diverging", trace
                )
        else:
            rising = 0
        jac = embedder.embed_grad(x)
        x = x + step_size * (jac.T @ resid)
        steps_taken += 1
    else:
        resid = target_y - embedder.embed(x)
        trace.append(0.5 * float(resid @ resid))
        converged = bool(np.linalg.norm(resid) < tol)
    return InversionResult(x, np.array(trace), converged, steps_taken)


def energy_distance(batch_a, batch_b) -> float:
    """Energy distance 2 E||a-b|| - E||a-a'|| - E||b-b'|| between two sample
    batches, with the expectations taken over all index pairs including the
    diagonal (V-statistics), so identical batches give exactly zero.
    """
    a = np.atleast_2d(np.asarray(batch_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(batch_b, dtype=np.float64))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ShapeError("both batches must be nonempty")
    if a.shape[1] != b.shape[1]:
        raise ShapeError("batches must share a dimension")
    cross = _pairwise_distances(a, b).mean()
    within_a = _pairwise_distances(a, a).mean()
    within_b = _pairwise_distances(b, b).mean()
    return float(2.0 * cross - within_a - within_b)
