"""Full pipeline vs static negatives, and bank contamination with and without the separation term."""

import numpy as np

from negstream.experiments import run_seed
from negstream.inversion import InversionConfig

from _common import seed_parser, seeds_of


def main():
    args = seed_parser(__doc__).parse_args()
    rows = []
    for s in seeds_of(args):
        full, static = run_seed(s), run_seed(s, dynamic=False)
        lam0 = run_seed(s, inversion=InversionConfig(lam=0.0))
        rows.append((full.report.fpr95, static.report.fpr95, full.report.auroc, static.report.auroc,
                     full.contamination, lam0.contamination))
        print(f"seed {s}: FPR95 {rows[-1][0]:.3f} (static {rows[-1][1]:.3f})  "
              f"contamination {rows[-1][4]:.3f} (lambda=0: {rows[-1][5]:.3f})")
    m = np.mean(rows, axis=0)
    print(f"mean: FPR95 {m[0]:.4f} vs {m[1]:.4f}, AUROC {m[2]:.4f} vs {m[3]:.4f}, "
          f"contamination {m[4]:.4f} vs {m[5]:.4f}")


if __name__ == "__main__":
    main()
