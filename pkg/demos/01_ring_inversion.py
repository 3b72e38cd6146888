"""Train a conditional denoiser on an annulus and sample pre-images.

The embedding function f(x) = ||x|| collapses each 2-D point to its radius,
so a single embedding y = 1.0 has a full circle of pre-images. A point
estimator can only pick one of them; the conditional diffusion model learns
the whole inverse distribution and samples from it.
"""

import os

import numpy as np

from preimage import (
    DatasetSpec,
    EmbedderInfo,
    SampleConfig,
    TrainConfig,
    generate_dataset,
    make_embedder,
    sample_batch,
    stack_samples,
    train,
    write_scatter_svg,
)

OUT = os.path.join(os.path.dirname(__file__), "out")


def main():
    os.makedirs(OUT, exist_ok=True)

    spec = DatasetSpec(distribution="annulus", input_dim=2, n_samples=20000, seed=0)
    embedder = make_embedder(EmbedderInfo(name="radius", input_dim=2, output_dim=1))
    xs, ys, _ = stack_samples(generate_dataset(spec, embedder))
    print(f"dataset: {len(xs)} annulus points, radii in "
          f"[{ys.min():.2f}, {ys.max():.2f}]")

    cfg = TrainConfig(seed=9, timesteps=100, batch_size=64, learning_rate=1e-3,
                      ema_rate=0.999, total_batches=2500)
    result = train(xs, ys, cfg, hidden_dims=(128, 128, 128), time_embed_dim=64)
    print(f"trained {cfg.total_batches} batches; "
          f"final loss {np.mean(result.loss_history[-100:]):.4f}")

    model = result.ema_model()
    target = np.array([1.0])
    samples = sample_batch(model, target, result.schedule,
                           SampleConfig(seed=101, guidance_scale=2.0), 500)

    radii = np.linalg.norm(samples, axis=1)
    angles = np.arctan2(samples[:, 1], samples[:, 0])
    occupied = (np.histogram(angles, bins=36, range=(-np.pi, np.pi))[0] > 0).sum()
    print(f"500 samples conditioned on y = 1.0 at guidance 2.0:")
    print(f"  mean |radius - 1| = {np.mean(np.abs(radii - 1)):.4f}")
    print(f"  radius spread     = {radii.std():.4f}")
    print(f"  angular coverage  = {occupied}/36 bins "
          "(a point estimator would land in 1)")

    path = os.path.join(OUT, "ring_inversion.svg")
    write_scatter_svg(path, samples, unit_circle=True)
    print(f"scatter written to {path} (samples should hug the unit circle)")


if __name__ == "__main__":
    main()
