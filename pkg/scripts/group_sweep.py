"""AUROC and FPR95 as the number of negative groups varies."""

import numpy as np

from negstream.experiments import run_seed
from negstream.scoring import ScoreConfig

from _common import seed_parser, seeds_of


def main():
    p = seed_parser(__doc__)
    p.add_argument("--groups", default="1,2,3,5,8,10")
    args = p.parse_args()
    for G in (int(g) for g in args.groups.split(",")):
        reps = [run_seed(s, score=ScoreConfig(G=G)).report for s in seeds_of(args)]
        print(f"G={G:<3d} AUROC {np.mean([r.auroc for r in reps]):.4f}  FPR95 {np.mean([r.fpr95 for r in reps]):.4f}")


if __name__ == "__main__":
    main()
