"""Condition sampling on an attribute as well as the embedding.

The annulus corpus labels each point with whether it lies in the upper
half-plane. Training with independent conditioning dropout on both the
embedding and the attribute gives one model that can answer three requests:
pre-images of y with the attribute on, with it off, or with no preference
(the -1 null token the dropout used during training).
"""

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
)


def main():
    spec = DatasetSpec(distribution="annulus", input_dim=2, n_samples=20000,
                       seed=0, attribute="upper")
    embedder = make_embedder(EmbedderInfo(name="radius", input_dim=2, output_dim=1))
    xs, ys, attrs = stack_samples(generate_dataset(spec, embedder))
    print(f"dataset: {len(xs)} points, attribute 'upper' "
          f"(fraction {attrs.mean():.3f})")

    cfg = TrainConfig(seed=9, timesteps=100, batch_size=64, learning_rate=1e-3,
                      ema_rate=0.999, total_batches=3000)
    result = train(xs, ys, cfg, attrs=attrs,
                   hidden_dims=(128, 128, 128), time_embed_dim=64)
    model = result.ema_model()
    target = np.array([1.0])

    print("sampling 400 pre-images of y = 1.0 under three attribute requests:")
    for label, a in (("upper (a=1)", np.array([1.0])),
                     ("lower (a=0)", np.array([0.0])),
                     ("no preference (a=-1)", np.array([-1.0]))):
        smp = sample_batch(model, target, result.schedule,
                           SampleConfig(seed=31, guidance_scale=2.0), 400, a=a)
        frac_upper = float((smp[:, 1] > 0).mean())
        radius_err = float(np.mean(np.abs(np.linalg.norm(smp, axis=1) - 1.0)))
        print(f"  {label:22} fraction in upper half = {frac_upper:.3f}, "
              f"mean |r-1| = {radius_err:.3f}")

    print("the attribute steers the half-plane; the embedding still "
          "pins the radius in every case")


if __name__ == "__main__":
    main()
