"""Sensitivity to the ID:OOD mix of the stream."""

import numpy as np

from negstream.experiments import run_seed
from negstream.synthworld import StreamPlan

from _common import seed_parser, seeds_of

RATIOS = [(200, 50), (200, 100), (200, 200), (100, 200), (50, 200)]


def main():
    args = seed_parser(__doc__).parse_args()
    for ratio in RATIOS:
        cells = []
        for s in seeds_of(args):
            full = run_seed(s, StreamPlan("random", ratio)).report
            static = run_seed(s, StreamPlan("random", ratio), dynamic=False).report
            cells.append((full.fpr95, static.fpr95))
        m = np.mean(cells, axis=0)
        print(f"{ratio[0]:>3d}:{ratio[1]:<3d}  FPR95 {m[0]:.4f}  static {m[1]:.4f}")


if __name__ == "__main__":
    main()
