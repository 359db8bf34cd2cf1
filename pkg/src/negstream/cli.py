"""``negstream`` command line.

Exit codes: 0 success, 1 validation failure, 2 I/O failure, 3 invariant
violation (failed gradient check, theorem counterexample, unsound bank).

Per-sample result columns, in order: sample_id, truth, phase, initial_score,
final_score, potential_ood, accepted, bank_size_after. Negative records:
rank, token_id, distance.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bank as bankmod
from . import io
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .core import Rng
from .engine import run_stream, setup
from .experiments import contamination, stream_for
from .inversion import gradient_check
from .metrics import report_from_results
from .negatives import build_id_model, mine_negatives
from .synthworld import World, generate_world
from .theorem import two_point_grid, verify_theorem

log = logging.getLogger("negstream")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INVARIANT = 0, 1, 2, 3
NEGATIVE_COLUMNS = ("rank", "token_id", "distance")


class InvariantViolation(RuntimeError):
    pass


def _ext(fmt: str) -> str:
    return "csv" if fmt == "csv" else "jsonl"


def _resolve(args) -> tuple[ExperimentConfig, Path | None]:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = args.output or cfg.output
    return cfg, (Path(out) if out else None)


def _need_output(out: Path | None) -> Path:
    if out is None:
        raise ConfigError("an output directory is required (--output or 'output' in the config)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _world(cfg: ExperimentConfig) -> World:
    if cfg.world_dir is not None:
        return io.load_world(cfg.world_dir)
    return generate_world(cfg.world_section().to_spec(cfg.seed))


def cmd_gen_world(args) -> int:
    cfg, out = _resolve(args)
    if cfg.world_dir is not None:
        raise ConfigError("gen-world needs a 'world' section, not 'world_dir'")
    out = _need_output(out)
    world = _world(cfg)
    fmt = args.embedding_format
    io.save_world(world, out, fmt=fmt, dtype=args.dtype)
    stream = stream_for(world, cfg.plan.to_plan(), cfg.seed)
    io.write_embeddings(out / ("stream.emb" if fmt == "binary" else "stream.csv"),
                        np.stack([it.vector for it in stream]),
                        [f"{it.sample_id}|{it.truth}|{it.phase}" for it in stream], fmt, args.dtype)
    (out / "config.json").write_text(dump_config(cfg))
    print(f"wrote world ({len(world.vocabulary)} words, {world.pools.n_id} ID, "
          f"{sum(len(p) for p in world.pools.ood_vectors)} OOD) and a {len(stream)}-sample stream to {out}")
    return EXIT_OK


def cmd_mine_negatives(args) -> int:
    cfg, out = _resolve(args)
    out = _need_output(out)
    world = _world(cfg)
    model = build_id_model(world.id_shots, world.class_text_features)
    static = mine_negatives(world.vocabulary, model, cfg.engine.L)
    records = [{"rank": i, "token_id": e.token_id, "distance": float(d)}
               for i, (e, d) in enumerate(zip(static.entries, static.distances))]
    path = out / f"negatives.{_ext(args.format)}"
    io.write_records(path, records, NEGATIVE_COLUMNS, args.format)
    d = np.asarray(static.distances)
    print(f"mined {len(records)} of {len(world.vocabulary)} words; distance range "
          f"[{d.min():.6f}, {d.max():.6f}] -> {path}")
    return EXIT_OK


def _run_once(world: World, cfg: ExperimentConfig, ratio, args, checkpoint: dict | None):
    engine_cfg = cfg.engine.to_config(cfg.seed, dynamic=False if args.no_dynamic else None)
    state = setup(world.id_shots, world.class_text_features, world.vocabulary, engine_cfg)
    if checkpoint is not None:
        state.load_dynamic(checkpoint)
    initial_bank = [e.insertion_index for e in state.bank.entries]
    stream = stream_for(world, cfg.plan.to_plan(ratio), cfg.seed)
    results = run_stream(state, stream, world.encoder)
    unsound = [e.origin for e in state.bank.entries if not bankmod.id_separated_criterion(e.feature, state.model)]
    if unsound:
        raise InvariantViolation(f"bank entries violate the ID-separated criterion: {unsound[:5]}")
    rep = report_from_results(results, [it.phase for it in stream])
    summary = {
        "id_ood_ratio": list(ratio or cfg.plan.id_ood_ratio),
        **rep.to_dict(),
        "initial_bank_size": len(initial_bank),
        "final_bank_size": len(state.bank),
        "buffer_size": 0 if state.buffer is None else len(state.buffer),
        "contamination": contamination(state),
        "dynamic": engine_cfg.dynamic,
    }
    return results, stream, state, summary


def cmd_run_stream(args) -> int:
    cfg, out = _resolve(args)
    out = _need_output(out)
    world = _world(cfg)
    checkpoint = None
    if args.checkpoint_in:
        checkpoint = json.loads(Path(args.checkpoint_in).read_text())
    ratios = cfg.sweep_ratios or [None]
    runs = []
    for ratio in ratios:
        results, stream, state, summary = _run_once(world, cfg, ratio, args, checkpoint)
        name = "results" if ratio is None else f"results_{ratio[0]}_{ratio[1]}"
        io.write_records(out / f"{name}.{_ext(args.format)}", io.result_records(results, stream),
                         io.RESULT_COLUMNS, args.format)
        runs.append(summary)
        print(f"ratio {summary['id_ood_ratio'][0]}:{summary['id_ood_ratio'][1]}  AUROC {summary['auroc']:.4f}  "
              f"FPR95 {summary['fpr95']:.4f}  bank {summary['final_bank_size']}")
    io.dump_json(out / "metrics.json", {"runs": runs})
    if args.checkpoint_out:
        # with a sweep, the checkpoint is the state after the last ratio
        io.dump_json(args.checkpoint_out, state.to_dict())
    return EXIT_OK


def cmd_grad_check(args) -> int:
    cfg, out = _resolve(args)
    world = _world(cfg)
    model = build_id_model(world.id_shots, world.class_text_features)
    gc = cfg.grad_check
    rep = gradient_check(world.encoder, model, Rng(cfg.seed).derive(7), gc.points, gc.lam, gc.h)
    line = {"points": rep.points, "h": rep.h, "max_rel_error": rep.max_rel_error,
            "worst_point": rep.worst_point, "passed": rep.passed}
    if out is not None:
        io.dump_json(_need_output(out) / "grad_check.json", line)
    print(f"grad-check {'PASS' if rep.passed else 'FAIL'}: max relative error {rep.max_rel_error:.3e} "
          f"over {rep.points} points (h={rep.h})")
    return EXIT_OK if rep.passed else EXIT_INVARIANT


def cmd_verify_theorem(args) -> int:
    cfg, out = _resolve(args)
    th = cfg.theorem
    trials = args.trials or th.trials
    Gs = [int(g) for g in args.G.split(",")] if args.G else th.G
    rng = Rng(cfg.seed)
    rows, failed = [], False
    for G in Gs:
        rep = verify_theorem(trials, G, rng.derive(G), th.transfers_per_trial)
        failed |= not rep.passed
        rows.append({"G": G, "trials": trials, "checked_pairs": rep.checked_pairs, "transfers": rep.transfers,
                     "violations": len(rep.violations)})
        print(f"G={G:<3d} pairs {rep.checked_pairs:6d}  transfers {rep.transfers:6d}  violations {len(rep.violations)}")
    worst = two_point_grid(th.grid)
    two_point_ok = worst <= 1e-12
    failed |= not two_point_ok
    print(f"two-point lemma on {th.grid}x{th.grid} grid: max gap {worst:.3e} ({'ok' if two_point_ok else 'VIOLATED'})")
    if out is not None:
        io.dump_json(_need_output(out) / "theorem.json", {"per_G": rows, "two_point_max_gap": worst})
    return EXIT_INVARIANT if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="negstream", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--output", help="output directory")
        sp.add_argument("--format", choices=["csv", "json-lines"], default="csv")
        return sp

    g = common(sub.add_parser("gen-world", help="generate a synthetic world and stream, write embedding files"))
    g.add_argument("--embedding-format", choices=["binary", "text"], default="binary")
    g.add_argument("--dtype", choices=["f32", "f64"], default="f64")
    g.set_defaults(func=cmd_gen_world)

    common(sub.add_parser("mine-negatives", help="select the L static negatives")).set_defaults(func=cmd_mine_negatives)

    r = common(sub.add_parser("run-stream", help="run the streaming detector and report metrics"))
    r.add_argument("--no-dynamic", action="store_true", help="static negatives only")
    r.add_argument("--checkpoint-in", help="resume bank, buffer and RNG from this file")
    r.add_argument("--checkpoint-out", help="write the final dynamic state here")
    r.set_defaults(func=cmd_run_stream)

    common(sub.add_parser("grad-check", help="finite-difference check of the inversion gradient")).set_defaults(
        func=cmd_grad_check)

    t = common(sub.add_parser("verify-theorem", help="randomized check of the group-score ordering result"))
    t.add_argument("--trials", type=int)
    t.add_argument("--G", help="comma-separated group counts")
    t.set_defaults(func=cmd_verify_theorem)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
