import argparse


def seed_parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated seeds")
    return p


def seeds_of(args) -> list[int]:
    return [int(s) for s in args.seeds.split(",")]
