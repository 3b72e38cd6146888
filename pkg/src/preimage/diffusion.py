"""Denoising diffusion over embedding-conditioned data.

The forward process corrupts data points x with Gaussian noise over T steps;
a ConditionalDenoiser learns to predict that noise given the target embedding
y (and optional attributes a). Sampling runs the learned reverse process with
classifier-free guidance, optional timestep respacing, and optional dynamic
thresholding of the clean-signal estimate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConfigurationError,
    NumericalDomainError,
    SamplingError,
    ShapeError,
    StateError,
)
from .nn import Adam, ConditionalDenoiser, EmaParams

BETA_MAX = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise levels of the forward process.

    All arrays have length T and are indexed by step-1 (steps run 1..T).
    timestep_map holds, for each step of this schedule, the step index of the
    original full-length schedule it corresponds to; for a schedule that was
    never respaced it is simply 1..T. posterior_variances[0] is 0 because the
    step-1 posterior is deterministic.
    """

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    posterior_variances: np.ndarray
    timestep_map: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.betas)


def schedule_from_betas(betas: np.ndarray, timestep_map=None) -> NoiseSchedule:
    """Derive the full schedule from its betas, validating the invariants."""
    betas = np.asarray(betas, dtype=np.float64)
    if betas.ndim != 1 or len(betas) == 0:
        raise ConfigurationError("betas must be a nonempty 1-D array")
    if np.any(betas <= 0.0) or np.any(betas >= 1.0):
        raise ConfigurationError("every beta must lie strictly inside (0, 1)")
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    if np.any(np.diff(alpha_bars) >= 0.0) or alpha_bars[0] >= 1.0:
        raise ConfigurationError("alpha_bar must be strictly decreasing from below 1")
    prev_bars = np.concatenate(([1.0], alpha_bars[:-1]))
    posterior = betas * (1.0 - prev_bars) / (1.0 - alpha_bars)
    if timestep_map is None:
        timestep_map = np.arange(1, len(betas) + 1, dtype=np.int64)
    else:
        timestep_map = np.asarray(timestep_map, dtype=np.int64)
        if timestep_map.shape != betas.shape:
            raise ShapeError("timestep_map must match betas in length")
    return NoiseSchedule(betas, alphas, alpha_bars, posterior, timestep_map)


def make_cosine_schedule(n_steps: int) -> NoiseSchedule:
    """Squared-cosine noise schedule.

    alpha_bar follows g(t)/g(0) with g(t) = cos(((t/T + 0.008) / 1.008) *
    pi/2)^2, realized as a running product of per-step betas that are clipped
    at 0.999 to keep the open-interval invariant near t = T.
    """
    if n_steps < 1:
        raise ConfigurationError(f"n_steps must be >= 1, got {n_steps}")

    def g(u: float) -> float:
        return math.cos((u + 0.008) / 1.008 * math.pi / 2.0) ** 2

    g0 = g(0.0)
    bars = np.array([g(t / n_steps) / g0 for t in range(n_steps + 1)])
    betas = np.clip(1.0 - bars[1:] / bars[:-1], None, BETA_MAX)
    return schedule_from_betas(betas)


def make_linear_schedule(n_steps: int) -> NoiseSchedule:
    """Linear beta schedule from 1e-4 to 0.02, rescaled by 1000/T."""
    if n_steps < 1:
        raise ConfigurationError(f"n_steps must be >= 1, got {n_steps}")
    scale = 1000.0 / n_steps
    betas = np.linspace(scale * 1e-4, scale * 0.02, n_steps)
    return schedule_from_betas(np.clip(betas, None, BETA_MAX))


def make_schedule(kind: str, n_steps: int) -> NoiseSchedule:
    if kind == "cosine":
        return make_cosine_schedule(n_steps)
    if kind == "linear":
        return make_linear_schedule(n_steps)
    raise ConfigurationError(f"unknown schedule kind {kind!r}")


def respace(schedule: NoiseSchedule, n_steps: int) -> NoiseSchedule:
    """Shorten a schedule to n_steps while preserving the kept alpha_bars.

    Keeps steps round(i * T / n) for i = 1..n (always including T) and
    re-derives betas from consecutive ratios of the kept alpha_bars, so the
    sub-schedule's running product reproduces them. timestep_map points back
    at the schedule that was respaced, composing across repeated respacing.
    """
    T = schedule.n_steps
    if not (1 <= n_steps <= T):
        raise ConfigurationError(f"respaced step count must lie in [1, {T}], got {n_steps}")
    kept = np.unique(np.round(np.arange(1, n_steps + 1) * (T / n_steps)).astype(np.int64))
    kept_bars = schedule.alpha_bars[kept - 1]
    prev = np.concatenate(([1.0], kept_bars[:-1]))
    betas = 1.0 - kept_bars / prev
    return schedule_from_betas(betas, timestep_map=schedule.timestep_map[kept - 1])


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of a training run. The seed is mandatory."""

    seed: int
    schedule: str = "cosine"
    timesteps: int = 1000
    cond_dropout: float = 0.1
    batch_size: int = 64
    learning_rate: float = 1e-4
    ema_rate: float = 0.9999
    total_batches: int = 10000

    def validate(self) -> None:
        if self.schedule not in ("cosine", "linear"):
            raise ConfigurationError(f"unknown schedule kind {self.schedule!r}")
        if self.timesteps < 1:
            raise ConfigurationError(f"timesteps must be >= 1, got {self.timesteps}")
        if not (0.0 <= self.cond_dropout <= 1.0):
            raise ConfigurationError(f"cond_dropout must lie in [0, 1], got {self.cond_dropout}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0.0 <= self.ema_rate <= 1.0):
            raise ConfigurationError(f"ema_rate must lie in [0, 1], got {self.ema_rate}")
        if self.total_batches < 1:
            raise ConfigurationError(f"total_batches must be >= 1, got {self.total_batches}")


@dataclass(frozen=True)
class SampleConfig:
    """Reverse-process settings. The seed is mandatory.

    respace_steps None means a quarter of the training schedule. threshold
    "auto" activates dynamic thresholding only when guidance_scale > 1.5,
    where over-saturated clean-signal estimates start to appear; True and
    False force it. variance_mode selects the posterior variance ("posterior")
    or the step beta ("beta") for the reverse noise.
    """

    seed: int
    guidance_scale: float = 2.0
    respace_steps: int | None = None
    threshold: bool | str = "auto"
    threshold_percentile: float = 0.99
    variance_mode: str = "posterior"

    def resolved(self) -> "SampleConfig":
        """Validate, clamp guidance below 1 (with a warning), resolve 'auto'."""
        cfg = self
        if cfg.guidance_scale < 1.0:
            warnings.warn(
                f"guidance scale {cfg.guidance_scale} below 1 has no supported "
                "interpretation; clamping to 1.0",
                stacklevel=2,
            )
            cfg = replace(cfg, guidance_scale=1.0)
        if cfg.variance_mode not in ("posterior", "beta"):
            raise ConfigurationError(f"unknown variance_mode {cfg.variance_mode!r}")
        if not (0.0 < cfg.threshold_percentile <= 1.0):
            raise ConfigurationError(
                f"threshold_percentile must lie in (0, 1], got {cfg.threshold_percentile}"
            )
        if cfg.threshold == "auto":
            cfg = replace(cfg, threshold=cfg.guidance_scale > 1.5)
        elif not isinstance(cfg.threshold, bool):
            raise ConfigurationError(f"threshold must be True, False, or 'auto', got {cfg.threshold!r}")
        return cfg


def null_id_token(id_dim: int) -> np.ndarray:
    """Unconditional stand-in for the target embedding: the zero vector."""
    return np.zeros(id_dim)


def null_attr_token(attr_dim: int) -> np.ndarray:
    """Unconditional stand-in for the attribute vector: the all minus-one vector."""
    return -np.ones(attr_dim)


def q_sample(x0, t, noise, schedule: NoiseSchedule):
    """Corrupt x0 to step t: sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.

    t is a step in 1..T, scalar or per-row for batched x0.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != x0.shape:
        raise ShapeError(f"noise shape {noise.shape} must match x0 shape {x0.shape}")
    t_arr = np.asarray(t, dtype=np.int64)
    if np.any(t_arr < 1) or np.any(t_arr > schedule.n_steps):
        raise ConfigurationError(f"t must lie in [1, {schedule.n_steps}]")
    bars = schedule.alpha_bars[t_arr - 1]
    if x0.ndim == 2 and bars.ndim == 1:
        bars = bars[:, None]
    return np.sqrt(bars) * x0 + np.sqrt(1.0 - bars) * noise


def cfg_combine(eps_uncond, eps_cond, scale: float):
    """Classifier-free guidance: uncond + scale * (cond - uncond).

    scale 1.0 returns the conditional prediction exactly (bitwise).
    """
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    if eps_uncond.shape != eps_cond.shape:
        raise ShapeError("branch predictions must have matching shapes")
    if scale == 1.0:
        return eps_cond.copy()
    return eps_uncond + scale * (eps_cond - eps_uncond)


def predict_x0(x_t, eps_hat, t: int, schedule: NoiseSchedule):
    """Invert the corruption formula to the clean-signal estimate."""
    bar = schedule.alpha_bars[t - 1]
    if bar <= 0.0:
        raise NumericalDomainError(f"alpha_bar at step {t} is not positive")
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    return (x_t - math.sqrt(1.0 - bar) * eps_hat) / math.sqrt(bar)


def dynamic_threshold(x0, percentile: float = 0.99):
    """Rescale x0 into [-s, s] -> [-1, 1] where s is the given percentile of
    the absolute entries, never below 1. Entries beyond s are clipped first,
    so values already within [-1, 1] pass through unchanged.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.size == 0:
        raise ConfigurationError("cannot threshold an empty array")
    if not (0.0 < percentile <= 1.0):
        raise ConfigurationError(f"percentile must lie in (0, 1], got {percentile}")
    s = np.quantile(np.abs(x0), percentile, axis=-1, keepdims=True)
    s = np.maximum(s, 1.0)
    return np.clip(x0, -s, s) / s


def training_loss(model, x0_batch, y_batch, schedule: NoiseSchedule, rng,
                  a_batch=None, dropout_prob: float = 0.1):
    """One denoising-score-matching step: returns the batch MSE loss and
    leaves the parameter gradients accumulated on the model.

    Draws per-row timesteps uniformly from 1..T and fresh Gaussian noise from
    rng, and independently replaces each row's conditioning with the null
    tokens (zero vector for y, minus-one vector for a) with the given
    probability. The loss is the squared error between the true and predicted
    noise, averaged over both batch and data dimensions.
    """
    x0_batch = np.asarray(x0_batch, dtype=np.float64)
    y_batch = np.asarray(y_batch, dtype=np.float64)
    if x0_batch.ndim != 2 or y_batch.ndim != 2 or len(x0_batch) != len(y_batch):
        raise ShapeError("x0 and y must be 2-D with matching row counts")
    n, d = x0_batch.shape
    if not (0.0 <= dropout_prob <= 1.0):
        raise ConfigurationError(f"dropout_prob must lie in [0, 1], got {dropout_prob}")

    t = rng.integers(1, schedule.n_steps + 1, size=n)
    noise = rng.standard_normal((n, d))
    x_t = q_sample(x0_batch, t, noise, schedule)

    drop_y = rng.random(n) < dropout_prob
    y_in = np.where(drop_y[:, None], 0.0, y_batch)
    a_in = None
    if a_batch is not None:
        a_batch = np.asarray(a_batch, dtype=np.float64)
        drop_a = rng.random(n) < dropout_prob
        a_in = np.where(drop_a[:, None], -1.0, a_batch)

    eps_pred = model.forward(x_t, y_in, t, a=a_in)
    resid = eps_pred - noise
    loss = float(np.mean(resid**2))
    model.backward(2.0 * resid / resid.size)
    return loss


@dataclass
class TrainResult:
    """A trained denoiser, its EMA shadow, and the schedule it was trained on."""

    model: ConditionalDenoiser
    ema: EmaParams
    schedule: NoiseSchedule
    config: TrainConfig
    loss_history: list = field(default_factory=list)

    def ema_model(self) -> ConditionalDenoiser:
        """The model with EMA weights substituted; used for sampling."""
        shadow = self.model.clone()
        self.ema.copy_to([p for _, p in shadow.parameters()])
        return shadow


def train(x0s, ys, config: TrainConfig, attrs=None, hidden_dims=(128, 128, 128),
          time_embed_dim: int = 64, model_seed: int | None = None,
          log_every: int = 0) -> TrainResult:
    """Fit a ConditionalDenoiser to (x, y[, a]) pairs.

    Batches are drawn with replacement from the dataset; the whole run is a
    deterministic function of the inputs and config.seed.
    """
    config.validate()
    x0s = np.asarray(x0s, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if x0s.ndim != 2 or ys.ndim != 2 or len(x0s) != len(ys):
        raise ShapeError("x0s and ys must be 2-D with matching row counts")
    if attrs is not None:
        attrs = np.asarray(attrs, dtype=np.float64)
        if attrs.ndim != 2 or len(attrs) != len(x0s):
            raise ShapeError("attrs must be 2-D with one row per sample")

    schedule = make_schedule(config.schedule, config.timesteps)
    model = ConditionalDenoiser(
        data_dim=x0s.shape[1],
        id_dim=ys.shape[1],
        hidden_dims=hidden_dims,
        time_embed_dim=time_embed_dim,
        attr_dim=None if attrs is None else attrs.shape[1],
        seed=config.seed if model_seed is None else model_seed,
    )
    params = [p for _, p in model.parameters()]
    grads = [g for _, g in model.gradients()]
    opt = Adam(params, lr=config.learning_rate)
    ema = EmaParams(params, rate=config.ema_rate)

    rng = np.random.default_rng(config.seed)
    result = TrainResult(model, ema, schedule, config)
    for step in range(config.total_batches):
        idx = rng.integers(0, len(x0s), size=config.batch_size)
        loss = training_loss(
            model, x0s[idx], ys[idx], schedule, rng,
            a_batch=None if attrs is None else attrs[idx],
            dropout_prob=config.cond_dropout,
        )
        opt.step(params, grads)
        ema.update(params)
        result.loss_history.append(loss)
        if log_every and (step + 1) % log_every == 0:
            recent = np.mean(result.loss_history[-log_every:])
            print(f"batch {step + 1}/{config.total_batches}  loss {recent:.5f}")
    model.fitted = True
    return result


def _reverse_step_coeffs(schedule: NoiseSchedule, i: int):
    """Posterior-mean coefficients for respaced step i (1-indexed)."""
    bar = schedule.alpha_bars[i - 1]
    prev_bar = 1.0 if i == 1 else schedule.alpha_bars[i - 2]
    beta = schedule.betas[i - 1]
    alpha = schedule.alphas[i - 1]
    coef_x0 = math.sqrt(prev_bar) * beta / (1.0 - bar)
    coef_xt = math.sqrt(alpha) * (1.0 - prev_bar) / (1.0 - bar)
    return coef_x0, coef_xt


def sample_batch(model, y, schedule: NoiseSchedule, config: SampleConfig,
                 n: int, a=None) -> np.ndarray:
    """Draw n pre-images of y by running the guided reverse process.

    The model must be fitted. y (and a, if given) may be a single vector
    shared by all rows or one row per sample. Deterministic for a fixed
    (model, y, a, config) including bitwise reproducibility of the result.
    """
    if not getattr(model, "fitted", False):
        raise StateError("model has not been fitted; train it or load a checkpoint")
    cfg = config.resolved()
    if n < 1:
        raise ConfigurationError(f"sample count must be >= 1, got {n}")

    steps = cfg.respace_steps
    if steps is None:
        steps = max(1, schedule.n_steps // 4)
    sub = respace(schedule, steps)

    y = np.asarray(y, dtype=np.float64)
    y_rows = np.tile(y, (n, 1)) if y.ndim == 1 else np.asarray(y, dtype=np.float64)
    if y_rows.shape != (n, model.id_dim):
        raise ShapeError(f"y must broadcast to ({n}, {model.id_dim})")
    y_null = np.zeros_like(y_rows)
    a_rows = a_null = None
    if a is not None:
        if model.attr_dim is None:
            raise ConfigurationError("model was built without attribute conditioning")
        a = np.asarray(a, dtype=np.float64)
        a_rows = np.tile(a, (n, 1)) if a.ndim == 1 else a
        if a_rows.shape != (n, model.attr_dim):
            raise ShapeError(f"a must broadcast to ({n}, {model.attr_dim})")
        a_null = -np.ones_like(a_rows)

    rng = np.random.default_rng(cfg.seed)
    x = rng.standard_normal((n, model.data_dim))
    scale = cfg.guidance_scale
    for i in range(sub.n_steps, 0, -1):
        t_orig = int(sub.timestep_map[i - 1])
        eps_cond = model.forward(x, y_rows, t_orig, a=a_rows)
        if scale == 1.0:
            eps_hat = eps_cond
        else:
            eps_uncond = model.forward(x, y_null, t_orig, a=a_null)
            eps_hat = cfg_combine(eps_uncond, eps_cond, scale)
        x0_hat = predict_x0(x, eps_hat, i, sub)
        if cfg.threshold:
            x0_hat = dynamic_threshold(x0_hat, cfg.threshold_percentile)
        coef_x0, coef_xt = _reverse_step_coeffs(sub, i)
        mean = coef_x0 * x0_hat + coef_xt * x
        if i > 1:
            if cfg.variance_mode == "posterior":
                var = sub.posterior_variances[i - 1]
            else:
                var = sub.betas[i - 1]
            x = mean + math.sqrt(var) * rng.standard_normal((n, model.data_dim))
        else:
            x = mean
        if not np.isfinite(x).all():
            raise SamplingError(
                f"non-finite state at reverse step {i} (original step {t_orig}); aborting"
            )
    return x


def sample(model, y, schedule: NoiseSchedule, config: SampleConfig, a=None) -> np.ndarray:
    """Draw a single pre-image of y; see sample_batch."""
    return sample_batch(model, y, schedule, config, 1, a=a)[0]
