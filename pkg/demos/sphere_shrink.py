"""Evolve the round sphere chart and compare the metric scale with 1 - 2 chi."""

from __future__ import annotations

import numpy as np

from fracflow import FlowConfig, evolve, round_sphere


def main() -> None:
    state = round_sphere(32, count_v=3)
    g0 = state.metric.h[..., 0, 0].copy()
    history, records = evolve(FlowConfig(alpha=1.0, step=1e-4, steps=50), state)
    final = history.states[-1]
    # chart-edge nodes use one-sided stencils, so compare on the interior
    ratio = (final.metric.h[..., 0, 0] / g0)[2:-2, 2:-2]
    chi = records[-1].chi
    print(f"chi = {chi:.4f}")
    print(f"g/g0 in [{ratio.min():.6f}, {ratio.max():.6f}], 1 - 2 chi = {1 - 2 * chi:.6f}")
    for rec in records[::10]:
        print(f"step {rec.step:3d}  chi {rec.chi:.4f}  mean R {rec.mean_R:.5f}  F {rec.F:.5f}")


if __name__ == "__main__":
    np.set_printoptions(precision=6)
    main()
