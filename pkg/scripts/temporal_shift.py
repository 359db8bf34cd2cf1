"""Four-phase stream with a new OOD cluster per phase: buffered bank vs top-M only."""

import numpy as np

from negstream.experiments import run_seed, temporal_plan

from _common import seed_parser, seeds_of


def main():
    p = seed_parser(__doc__)
    p.add_argument("--phases", type=int, default=4)
    args = p.parse_args()
    plan = temporal_plan(args.phases)
    out = {True: [], False: []}
    for s in seeds_of(args):
        for buffered in (True, False):
            rep = run_seed(s, plan, use_buffer=buffered).report
            out[buffered].append([rep.fpr95] + [r.fpr95 for _, r in rep.per_phase])
    for buffered, rows in out.items():
        m = np.mean(rows, axis=0)
        phases = " ".join(f"{x:.3f}" for x in m[1:])
        print(f"{'buffer   ' if buffered else 'no buffer'}  FPR95 {m[0]:.4f}  per phase [{phases}]")


if __name__ == "__main__":
    main()
