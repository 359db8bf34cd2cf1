"""Embedding files, result records and world directories.

Binary embedding file layout (all little-endian)::

    b"NEGSTREAM-EMB-1"   15-byte magic
    uint32 d, uint32 n   dimension and row count
    4-byte dtype tag     b"f32\\0" (default) or b"f64\\0"
    n * d floats         row-major

followed by an optional identifier block (``uint32`` byte length plus
newline-joined UTF-8 ids). The text variant starts with the line
``NEGSTREAM-EMB-1,<d>,<n>,text`` and then holds one ``id,x1,...,xd`` row per
vector.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import NegStreamError, normalize_rows
from .inversion import SyntheticEncoder
from .negatives import VocabularyEntry
from .synthworld import SamplePools, StreamItem, World, WorldSpec

MAGIC = b"NEGSTREAM-EMB-1"
LOAD_NORM_TOL = 1e-3
DTYPES = {b"f32\0": "<f4", b"f64\0": "<f8"}

RESULT_COLUMNS = ("sample_id", "truth", "phase", "initial_score", "final_score", "potential_ood", "accepted",
                  "bank_size_after")


class FormatError(NegStreamError):
    pass


def write_embeddings(path: str | Path, vectors: np.ndarray, ids: Sequence[str] | None = None,
                     fmt: str = "binary", dtype: str = "f32") -> None:
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    n, d = vectors.shape
    if ids is not None and len(ids) != n:
        raise FormatError(f"{len(ids)} ids for {n} vectors")
    path = Path(path)
    if fmt == "text":
        ids = ids if ids is not None else [f"row-{i}" for i in range(n)]
        with path.open("w", newline="") as f:
            f.write(f"{MAGIC.decode()},{d},{n},text\n")
            w = csv.writer(f, lineterminator="\n")
            for i, row in zip(ids, vectors):
                w.writerow([i, *(repr(float(x)) for x in row)])
        return
    if fmt != "binary":
        raise FormatError(f"unknown embedding format {fmt!r}")
    tag = (dtype.encode() + b"\0")[:4]
    if tag not in DTYPES:
        raise FormatError(f"unknown dtype tag {dtype!r}")
    with path.open("wb") as f:
        f.write(MAGIC + struct.pack("<II", d, n) + tag)
        f.write(vectors.astype(DTYPES[tag]).tobytes())
        if ids is not None:
            blob = "\n".join(ids).encode()
            f.write(struct.pack("<I", len(blob)) + blob)


def read_embeddings(path: str | Path, normalize: bool = True) -> tuple[np.ndarray, list[str]]:
    """Load an embedding file in either variant. Unit-norm rows are re-normalized to float64.

    With ``normalize=True`` each stored row must already have norm 1 within 1e-3.
    """
    path = Path(path)
    raw = path.read_bytes()
    if raw.startswith(MAGIC + b","):
        vectors, ids = _read_text(raw.decode())
    elif raw.startswith(MAGIC):
        vectors, ids = _read_binary(raw)
    else:
        raise FormatError(f"{path}: missing {MAGIC.decode()} header")
    if normalize:
        norms = np.linalg.norm(vectors, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > LOAD_NORM_TOL)
        if bad.size:
            raise FormatError(f"{path}: row {bad[0]} has norm {norms[bad[0]]:.6f}, expected unit norm")
        vectors = normalize_rows(vectors)
    return vectors, ids


def _read_binary(raw: bytes) -> tuple[np.ndarray, list[str]]:
    off = len(MAGIC)
    if len(raw) < off + 12:
        raise FormatError("truncated header")
    d, n = struct.unpack_from("<II", raw, off)
    tag = raw[off + 8: off + 12]
    if tag not in DTYPES:
        raise FormatError(f"unknown dtype tag {tag!r}")
    off += 12
    width = np.dtype(DTYPES[tag]).itemsize
    end = off + n * d * width
    if len(raw) < end:
        raise FormatError(f"expected {n} rows of {d} values, file is truncated")
    vectors = np.frombuffer(raw[off:end], dtype=DTYPES[tag]).astype(np.float64).reshape(n, d)
    ids = [f"row-{i}" for i in range(n)]
    if len(raw) > end:
        (length,) = struct.unpack_from("<I", raw, end)
        blob = raw[end + 4: end + 4 + length].decode()
        ids = blob.split("\n") if n else []
        if len(ids) != n:
            raise FormatError(f"{len(ids)} ids for {n} rows")
    return vectors, ids


def _read_text(text: str) -> tuple[np.ndarray, list[str]]:
    lines = text.splitlines()
    head = lines[0].split(",")
    if len(head) != 4 or head[3] != "text":
        raise FormatError(f"bad text header {lines[0]!r}")
    d, n = int(head[1]), int(head[2])
    rows = list(csv.reader(lines[1:]))
    if len(rows) != n:
        raise FormatError(f"header promises {n} rows, found {len(rows)}")
    ids, vals = [], []
    for r in rows:
        if len(r) != d + 1:
            raise FormatError(f"row {r[:1]} has {len(r) - 1} values, expected {d}")
        ids.append(r[0])
        vals.append([float(x) for x in r[1:]])
    return np.array(vals, dtype=np.float64).reshape(n, d), ids


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else str(x)


def write_records(path: str | Path, records: Iterable[dict], columns: Sequence[str], fmt: str = "csv") -> None:
    """Write records with a fixed column order; floats use shortest round-trip repr."""
    path = Path(path)
    if fmt == "csv":
        with path.open("w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(columns)
            for r in records:
                w.writerow([_fmt(r[c]) for c in columns])
    elif fmt == "json-lines":
        with path.open("w") as f:
            for r in records:
                f.write(json.dumps({c: r[c] for c in columns}) + "\n")
    else:
        raise FormatError(f"unknown record format {fmt!r}")


def read_records(path: str | Path, fmt: str = "csv") -> list[dict]:
    path = Path(path)
    if fmt == "csv":
        with path.open(newline="") as f:
            return list(csv.DictReader(f))
    return [json.loads(line) for line in path.read_text().splitlines() if line]


def result_records(results, stream: Sequence[StreamItem] | None = None) -> list[dict]:
    phases = [it.phase for it in stream] if stream is not None else [0] * len(results)
    return [
        {
            "sample_id": r.sample_id,
            "truth": r.truth,
            "phase": p,
            "initial_score": float(r.initial_score),
            "final_score": float(r.final_score),
            "potential_ood": bool(r.potential_ood),
            "accepted": bool(r.accepted),
            "bank_size_after": int(r.bank_size_after),
        }
        for r, p in zip(results, phases)
    ]


def dump_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- world directories --------------------------------------------------------

def save_world(world: World, out: str | Path, fmt: str = "binary", dtype: str = "f64") -> None:
    """Write every array of ``world`` so it can be replayed without regeneration."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ext = ".emb" if fmt == "binary" else ".csv"

    def emb(name, vectors, ids):
        write_embeddings(out / f"{name}{ext}", vectors, ids, fmt, dtype)

    shots = np.vstack(world.id_shots)
    shot_ids = [f"c{c:04d}-s{j:03d}" for c, s in enumerate(world.id_shots) for j in range(len(s))]
    emb("shots", shots, shot_ids)
    emb("class_text", world.class_text_features, [f"class_{c}" for c in range(len(world.class_text_features))])
    emb("vocab_text", np.stack([v.text_feature for v in world.vocabulary]), [v.token_id for v in world.vocabulary])
    emb("vocab_tokens", np.stack([v.token_embedding for v in world.vocabulary]), [v.token_id for v in world.vocabulary])
    p = world.pools
    emb("id_pool", p.id_vectors,
        [f"id-{i:05d}|{int(p.id_labels[i])}|{int(p.id_hard[i])}" for i in range(len(p.id_vectors))])
    for j, pool in enumerate(p.ood_vectors):
        emb(f"ood_pool_{j}", pool, [f"ood-c{j}-{i:05d}" for i in range(len(pool))])
    dump_json(out / "encoder.json", world.encoder.to_dict())
    dump_json(out / "world.json", {
        "format": fmt,
        "dtype": dtype,
        "spec": world.spec.__dict__,
        "n_ood_clusters": len(p.ood_vectors),
        "id_means": world.id_means.tolist(),
        "ood_means": world.ood_means.tolist(),
    })


def load_world(path: str | Path) -> World:
    path = Path(path)
    if not (path / "world.json").exists():
        raise FileNotFoundError(f"{path}/world.json not found")
    meta = json.loads((path / "world.json").read_text())
    ext = ".emb" if meta["format"] == "binary" else ".csv"

    def emb(name, normalize=True):
        return read_embeddings(path / f"{name}{ext}", normalize)

    shots, shot_ids = emb("shots")
    classes = sorted({s.split("-")[0] for s in shot_ids})
    id_shots = [shots[[i for i, s in enumerate(shot_ids) if s.startswith(c + "-")]] for c in classes]
    class_text, _ = emb("class_text")
    vt, vids = emb("vocab_text")
    tokens, _ = emb("vocab_tokens", normalize=False)
    vocabulary = [VocabularyEntry(i, z, t) for i, z, t in zip(vids, tokens, vt)]
    idv, idids = emb("id_pool")
    labels = np.array([int(s.split("|")[1]) for s in idids])
    hard = np.array([bool(int(s.split("|")[2])) for s in idids])
    oods = [emb(f"ood_pool_{j}")[0] for j in range(meta["n_ood_clusters"])]
    encoder = SyntheticEncoder.from_dict(json.loads((path / "encoder.json").read_text()))
    spec = WorldSpec(**meta["spec"])
    return World(spec, id_shots, class_text, vocabulary, encoder, SamplePools(idv, labels, hard, oods),
                 np.array(meta["id_means"]), np.array(meta["ood_means"]))
