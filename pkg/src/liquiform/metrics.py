"""PSNR/SSIM, per-category evaluation reports and the ablation suite.

Reports mirror a benchmark table: columns S0 (overall) plus S1..S4 (one
per canonical distortion strength), cells holding mean PSNR, mean SSIM
and the pair count.  The ablation suite trains seven configurations of
the two-stage pipeline and evaluates each on the held-out split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from . import dataset as ds
from . import imgio, training
from .models import Network, NetworkConfig, build_discriminator, build_refinement
from .tensor import Tensor
from .training import TrainConfig

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2

CATEGORY_COLUMNS = ("S0",) + ds.CATEGORIES

ABLATION_CONFIGS = (
    "full",
    "only_rectification",
    "only_refinement",
    "refinement_wo_adv",
    "refinement_wo_mse",
    "rectification_wo_adv",
    "rectification_wo_mse",
)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1/MSE) for [0,1] images, capped at 100 dB for zero error."""
    if a.shape != b.shape:
        raise ValueError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def _gaussian_window(n: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    offsets = np.arange(n, dtype=np.float64) - (n - 1) / 2.0
    g = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Separable windowed sum over every fully-inside position."""
    n = window.shape[0]
    h, w = img.shape
    horiz = np.zeros((h, w - n + 1), dtype=np.float64)
    for t in range(n):
        horiz += window[t] * img[:, t:t + w - n + 1]
    out = np.zeros((h - n + 1, w - n + 1), dtype=np.float64)
    for t in range(n):
        out += window[t] * horiz[t:t + h - n + 1, :]
    return out


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM, 11x11 Gaussian window, per channel then averaged."""
    if a.shape != b.shape:
        raise ValueError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    h, w, channels = a.shape
    if min(h, w) < SSIM_WINDOW:
        raise ValueError(
            f"ssim: image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    window = _gaussian_window()
    per_channel = []
    for c in range(channels):
        x = a[:, :, c].astype(np.float64)
        y = b[:, :, c].astype(np.float64)
        mu_x = _filter_valid(x, window)
        mu_y = _filter_valid(y, window)
        var_x = _filter_valid(x * x, window) - mu_x * mu_x
        var_y = _filter_valid(y * y, window) - mu_y * mu_y
        cov = _filter_valid(x * y, window) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
        den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
        per_channel.append(float(np.mean(num / den)))
    return float(np.mean(per_channel))


# -- report ----------------------------------------------------------------


@dataclass(frozen=True)
class CellStats:
    psnr: float
    ssim: float
    count: int


def _empty_cell() -> CellStats:
    return CellStats(float("nan"), float("nan"), 0)


class EvalReport:
    """Rows of named configurations, columns S0..S4."""

    def __init__(self):
        self.rows: dict[str, dict[str, CellStats]] = {}

    def add_row(self, name: str, cells: dict[str, CellStats]) -> None:
        if name in self.rows:
            raise ValueError(f"duplicate report row {name!r}")
        missing = [c for c in CATEGORY_COLUMNS if c not in cells]
        if missing:
            raise ValueError(f"row {name!r} missing columns {missing}")
        self.rows[name] = {c: cells[c] for c in CATEGORY_COLUMNS}

    def to_table(self) -> str:
        header = ["config"] + [f"{c} psnr/ssim (n)" for c in CATEGORY_COLUMNS]
        body = []
        for name, cells in self.rows.items():
            line = [name]
            for col in CATEGORY_COLUMNS:
                cell = cells[col]
                if cell.count == 0:
                    line.append("-")
                else:
                    line.append(f"{cell.psnr:.2f}/{cell.ssim:.4f} ({cell.count})")
            body.append(line)
        widths = [max(len(row[i]) for row in [header] + body)
                  for i in range(len(header))]
        lines = []
        for row in [header] + body:
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        return "\n".join(lines) + "\n"

    def to_records(self) -> str:
        lines = []
        for name, cells in self.rows.items():
            for col in CATEGORY_COLUMNS:
                cell = cells[col]
                lines.append(f"{name}\t{col}\t{cell.psnr!r}\t{cell.ssim!r}\t{cell.count}")
        return "\n".join(lines) + "\n"


Restorer = Callable[[np.ndarray], np.ndarray]


def identity_restorer(image: np.ndarray) -> np.ndarray:
    return image


def network_restorer(stage1: Network, stage2: Optional[Network] = None) -> Restorer:
    """Wrap the trained cascade as an HWC image function."""

    def fn(image: np.ndarray) -> np.ndarray:
        x = Tensor(np.ascontiguousarray(
            image.transpose(2, 0, 1)[None], dtype=np.float32))
        out = training.restore(x, stage1, stage2)
        return np.ascontiguousarray(out.data[0].transpose(1, 2, 0))

    return fn


def evaluate(restorer: Restorer, manifest: ds.DatasetManifest,
             split_name: str = "test", *, k_aware: bool = False) -> dict[str, CellStats]:
    """Score restorer(distorted) against the original for every split pair.

    With ``k_aware`` the restorer is called as ``restorer(image, k)`` so
    oracle restorers can invert each pair's recorded warp.
    """
    records = manifest.for_split(split_name)
    if not records:
        raise ValueError(f"no pairs in split {split_name!r}")
    sums: dict[str, list] = {c: [0.0, 0.0, 0] for c in CATEGORY_COLUMNS}
    for rec in records:
        distorted = imgio.read_image(manifest.resolve(rec.distorted_path))
        original = imgio.read_image(manifest.resolve(rec.original_path))
        restored = restorer(distorted, rec.k) if k_aware else restorer(distorted)
        if restored.shape != original.shape:
            raise ValueError(
                f"restorer returned shape {restored.shape} for pair "
                f"{rec.distorted_path!r}, expected {original.shape}")
        p = psnr(restored, original)
        s = ssim(restored, original)
        cats = ["S0"]
        if rec.category != "S0":
            cats.append(rec.category)
        for cat in cats:
            sums[cat][0] += p
            sums[cat][1] += s
            sums[cat][2] += 1
    cells = {}
    for cat, (ps, ss, n) in sums.items():
        cells[cat] = CellStats(ps / n, ss / n, n) if n else _empty_cell()
    return cells


# -- ablation suite --------------------------------------------------------


def _all_pretrain(cfg: TrainConfig) -> TrainConfig:
    return replace(cfg, pretrain_epochs=cfg.pretrain_epochs + cfg.epochs, epochs=0)


def _wo_mse(cfg: TrainConfig) -> TrainConfig:
    # adversarial-only training needs the GAN phase from step one, and with
    # the content term gone the adversarial term is the whole objective, so
    # its balance weight no longer applies
    return replace(cfg, mse_weight=0.0, lambda_adv=1.0, pretrain_epochs=0,
                   epochs=cfg.pretrain_epochs + cfg.epochs)


def _no_training(cfg: TrainConfig) -> TrainConfig:
    return replace(cfg, pretrain_epochs=0, epochs=0)


def _refinement_only(manifest, model_cfg, cfg, split_name):
    """Refinement net trained directly on distorted inputs, no stage 1."""
    s1, s2, s3, s4 = training._stage_seeds(cfg.seed)
    g = build_refinement(model_cfg, seed=s3)
    d = build_discriminator(model_cfg, seed=s4)
    training.train_stage(g, d, manifest, cfg, split_name=split_name, stage=1)
    return g


def ablation_suite(manifest: ds.DatasetManifest, model_cfg: NetworkConfig,
                   cfg: TrainConfig, *, train_split: str = "train",
                   eval_split: str = "test") -> EvalReport:
    """Train and evaluate the seven pipeline configurations."""
    report = EvalReport()

    def run_pipeline(stage1_cfg, stage2_cfg):
        result = training.train_pipeline(
            manifest, model_cfg, stage1_cfg, stage2_cfg, split_name=train_split)
        return network_restorer(result.stage1, result.stage2)

    variants: dict[str, Callable[[], Restorer]] = {
        "full": lambda: run_pipeline(cfg, cfg),
        "only_rectification": lambda: run_pipeline(cfg, _no_training(cfg)),
        "only_refinement": lambda: network_restorer(
            _refinement_only(manifest, model_cfg, cfg, train_split)),
        "refinement_wo_adv": lambda: run_pipeline(cfg, _all_pretrain(cfg)),
        "refinement_wo_mse": lambda: run_pipeline(cfg, _wo_mse(cfg)),
        "rectification_wo_adv": lambda: run_pipeline(_all_pretrain(cfg), cfg),
        "rectification_wo_mse": lambda: run_pipeline(_wo_mse(cfg), cfg),
    }
    for name in ABLATION_CONFIGS:
        restorer = variants[name]()
        report.add_row(name, evaluate(restorer, manifest, eval_split))
    return report
