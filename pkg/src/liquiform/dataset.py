"""Paired-dataset construction and iteration.

A dataset is a directory of (distorted, original) image pairs plus a
line-oriented manifest.  Originals are resized to the training size,
distorted with a scaling factor drawn from the configured grid, and both
sides are written as image files.  Train/test assignment hashes the
original's identity so all pairs from one source land in one split.

Manifest format (UTF-8, paths relative to the manifest's directory):
    dfd-manifest v1 seed=<int>
    <distorted_path>\t<original_path>\t<k>\t<category>\t<split>
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import imgio, warp
from .tensor import Tensor

log = logging.getLogger("liquiform.dataset")

K_GRID = (0.5, 0.8, 1.5, 2.7)
CATEGORIES = ("S1", "S2", "S3", "S4")

_SOURCE_EXTS = {".png", ".ppm", ".pnm"}


def category_for_k(k: float) -> str:
    """S1..S4 for the canonical grid; S0 (uncategorized) for any other k.

    S0 rows count toward the overall aggregate only.
    """
    for grid_k, cat in zip(K_GRID, CATEGORIES):
        if abs(k - grid_k) <= 1e-9:
            return cat
    return "S0"


@dataclass(frozen=True)
class PairRecord:
    distorted_path: str   # posix-style, relative to the manifest directory
    original_path: str
    k: float
    category: str
    split: str            # train | test


@dataclass
class DatasetManifest:
    root: Path            # directory the relative paths resolve against
    seed: int
    records: list[PairRecord]

    def resolve(self, rel: str) -> Path:
        return self.root / Path(rel)

    def for_split(self, split: str) -> list[PairRecord]:
        if split not in ("train", "test"):
            raise ValueError(f"split must be train or test, got {split!r}")
        return [r for r in self.records if r.split == split]


@dataclass
class Batch:
    distorted: Tensor     # (N, C, H, W) float32 in [0,1]
    original: Tensor
    ks: list[float]


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    lines = [f"dfd-manifest v1 seed={manifest.seed}"]
    for r in manifest.records:
        lines.append(f"{r.distorted_path}\t{r.original_path}\t{r.k!r}\t"
                     f"{r.category}\t{r.split}")
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tmp.replace(path)


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].startswith("dfd-manifest v1 seed="):
        raise ValueError(f"{path}: missing 'dfd-manifest v1 seed=<int>' header")
    try:
        seed = int(lines[0].split("seed=", 1)[1])
    except ValueError:
        raise ValueError(f"{path}: malformed seed in header") from None
    records = []
    for ln_no, ln in enumerate(lines[1:], start=2):
        if not ln.strip():
            continue
        parts = ln.split("\t")
        if len(parts) != 5:
            raise ValueError(f"{path}:{ln_no}: expected 5 tab-separated fields")
        dist, orig, k_str, category, split = parts
        k = float(k_str)
        if category_for_k(k) != category:
            raise ValueError(
                f"{path}:{ln_no}: category {category} does not match k={k_str}")
        if split not in ("train", "test"):
            raise ValueError(f"{path}:{ln_no}: bad split {split!r}")
        records.append(PairRecord(dist, orig, k, category, split))
    return DatasetManifest(root=path.parent, seed=seed, records=records)


def _list_sources(src_dir: Path) -> list[Path]:
    return sorted(p for p in src_dir.iterdir()
                  if p.is_file() and p.suffix.lower() in _SOURCE_EXTS)


def generate(src_dir, out_dir, k_list: Sequence[float] = K_GRID,
             size: tuple[int, int] = (224, 224), seed: int = 0,
             all_k: bool = False) -> DatasetManifest:
    """Build pairs from every decodable image under src_dir.

    One k per image is drawn uniformly (seeded); all_k applies every k to
    every image instead.  Writes resized originals, distorted images and
    the manifest under out_dir; all records start in the train split.
    """
    src_dir, out_dir = Path(src_dir), Path(out_dir)
    ks = [float(k) for k in k_list]
    if not ks or any(k <= 0 for k in ks):
        raise ValueError(f"k_list must be non-empty positive reals, got {k_list}")
    sources = _list_sources(src_dir)
    if not sources:
        raise ValueError(f"no source images (png/ppm) found in {src_dir}")

    ext = ".png" if imgio.png_available() else ".ppm"
    (out_dir / "originals").mkdir(parents=True, exist_ok=True)
    (out_dir / "distorted").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records: list[PairRecord] = []
    for src in sources:
        try:
            img = imgio.read_image(src)
        except (OSError, ValueError) as exc:
            log.warning("skipping undecodable source %s: %s", src, exc)
            continue
        img = imgio.resize_bilinear(img, size[0], size[1])
        orig_rel = f"originals/{src.stem}{ext}"
        imgio.write_image(out_dir / orig_rel, img)
        chosen = ks if all_k else [ks[int(rng.integers(len(ks)))]]
        for k in chosen:
            distorted = warp.distort(img, warp.WarpSpec(k=k))
            dist_rel = f"distorted/{src.stem}_k{k!r}{ext}"
            imgio.write_image(out_dir / dist_rel, distorted)
            records.append(PairRecord(dist_rel, orig_rel, k, category_for_k(k),
                                      "train"))
    if not records:
        raise ValueError(f"no decodable source images in {src_dir}")
    manifest = DatasetManifest(root=out_dir, seed=seed, records=records)
    write_manifest(manifest, out_dir / "manifest.txt")
    return manifest


def split(manifest: DatasetManifest, test_fraction: float,
          seed: int) -> DatasetManifest:
    """Assign splits by ranking originals on a seeded hash of their path.

    Every pair from one original lands in one split; the test count is
    round(fraction * originals), which keeps proportions within one item.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    originals = sorted({r.original_path for r in manifest.records})
    if len(originals) < 2:
        raise ValueError(f"need at least 2 distinct originals to split, "
                         f"have {len(originals)}")
    n_test = round(test_fraction * len(originals))
    if n_test == 0:
        raise ValueError(
            f"test_fraction {test_fraction} of {len(originals)} originals "
            f"yields an empty test split")
    if n_test == len(originals):
        raise ValueError(
            f"test_fraction {test_fraction} of {len(originals)} originals "
            f"yields an empty train split")

    def rank(path: str) -> str:
        return hashlib.sha256(f"{seed}:{path}".encode("utf-8")).hexdigest()

    test_set = set(sorted(originals, key=rank)[:n_test])
    new_records = [replace(r, split="test" if r.original_path in test_set
                           else "train") for r in manifest.records]
    return DatasetManifest(root=manifest.root, seed=manifest.seed,
                           records=new_records)


def _load_pair(manifest: DatasetManifest, record: PairRecord):
    pair = []
    for rel in (record.distorted_path, record.original_path):
        path = manifest.resolve(rel)
        try:
            img = imgio.read_image(path)
        except (OSError, ValueError) as exc:
            raise OSError(f"cannot load {path} referenced by manifest: {exc}") from exc
        pair.append(np.ascontiguousarray(img.transpose(2, 0, 1)))
    return pair


def iter_batches(manifest: DatasetManifest, split_name: str, batch_size: int,
                 shuffle_seed: int, epoch: int) -> Iterator[Batch]:
    """Seeded per-epoch shuffle over one split; the final batch may be short."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    records = manifest.for_split(split_name)
    order = np.random.default_rng([shuffle_seed, epoch]).permutation(len(records))
    for start in range(0, len(records), batch_size):
        chunk = [records[i] for i in order[start:start + batch_size]]
        pairs = [_load_pair(manifest, r) for r in chunk]
        yield Batch(
            distorted=Tensor(np.stack([p[0] for p in pairs])),
            original=Tensor(np.stack([p[1] for p in pairs])),
            ks=[r.k for r in chunk],
        )
