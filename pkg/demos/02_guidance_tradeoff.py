"""Sweep the guidance scale and watch identity error trade against diversity.

Classifier-free guidance extrapolates the conditional noise prediction away
from the unconditional one. On a mid-training model, turning the scale up
pulls samples closer to the conditioning embedding (identity error falls)
while narrowing what gets sampled (diversity falls too). Both columns of the
table below should decrease as s grows.
"""

import os

import numpy as np

from preimage import (
    DatasetSpec,
    EmbedderInfo,
    SampleConfig,
    TrainConfig,
    generate_dataset,
    guidance_sweep,
    make_embedder,
    stack_samples,
    train,
    write_csv,
)

OUT = os.path.join(os.path.dirname(__file__), "out")


def main():
    os.makedirs(OUT, exist_ok=True)

    spec = DatasetSpec(distribution="annulus", input_dim=2, n_samples=20000, seed=0)
    embedder = make_embedder(EmbedderInfo(name="radius", input_dim=2, output_dim=1))
    xs, ys, _ = stack_samples(generate_dataset(spec, embedder))
    cfg = TrainConfig(seed=9, timesteps=100, batch_size=64, learning_rate=1e-3,
                      ema_rate=0.999, total_batches=2500)
    result = train(xs, ys, cfg, hidden_dims=(128, 128, 128), time_embed_dim=64)
    model = result.ema_model()

    scales = [1.0, 1.5, 2.0, 2.5, 3.0]
    base = SampleConfig(seed=11, respace_steps=25, threshold=False)
    rows = guidance_sweep(model, result.schedule, embedder,
                          np.array([[1.0]]), scales, 500, base)

    print("guidance   identity_error   diversity")
    for row in rows:
        print(f"  s={row.guidance_scale:<4}   {row.identity_error:<14.4f} "
              f"  {row.diversity:.4f}")

    path = os.path.join(OUT, "guidance_sweep.csv")
    write_csv(path, ["s", "identity_error", "diversity", "n"],
              [[r.guidance_scale, r.identity_error, r.diversity, r.n_samples]
               for r in rows])
    print(f"\nsweep table written to {path}")
    print("higher guidance: closer to the target embedding, less varied output")


if __name__ == "__main__":
    main()
