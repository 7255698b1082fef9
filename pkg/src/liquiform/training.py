"""Losses, optimizers, checkpoints and the two-stage training loop.

Stage 1 trains the rectification net against originals from distorted
inputs; stage 2 trains the refinement net on frozen stage-1 outputs.
Each stage alternates one discriminator step with one generator step per
batch, after a content-only warm-up (``pretrain_epochs``) during which
the discriminator is scored for the log but never updated.

All randomness flows from TrainConfig.seed, every reduction order is
fixed, and logs are written with repr floats, so a rerun on one thread
reproduces the TrainLog byte for byte.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import dataset as ds
from . import tensor as T
from .models import Network, NetworkConfig, build_discriminator, build_rectification, build_refinement
from .tensor import Tensor


class TrainingDiverged(RuntimeError):
    """A loss or network output stopped being finite."""

    def __init__(self, step: int, quantity: str):
        super().__init__(f"non-finite {quantity} at step {step}")
        self.step = step
        self.quantity = quantity


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lambda_adv: float = 0.001
    learning_rate: float = 0.01
    momentum: float = 0.9
    pretrain_epochs: int = 10
    epochs: int = 30
    batch_size: int = 8
    seed: int = 0
    d_steps_per_g_step: int = 1
    optimizer: str = "sgd"
    mse_weight: float = 1.0  # 0 gives the adversarial-only ablation

    def __post_init__(self):
        if self.lambda_adv < 0:
            raise ValueError(f"lambda_adv must be >= 0, got {self.lambda_adv}")
        if self.mse_weight < 0:
            raise ValueError(f"mse_weight must be >= 0, got {self.mse_weight}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0,1), got {self.momentum}")
        if self.pretrain_epochs < 0 or self.epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.d_steps_per_g_step < 1:
            raise ValueError("d_steps_per_g_step must be >= 1")
        if self.optimizer != "sgd":
            raise ValueError(f"unknown optimizer {self.optimizer!r} (choices: sgd)")


# -- losses ----------------------------------------------------------------


def content_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Batch mean of the per-sample, per-element squared error."""
    if pred.shape != target.shape:
        raise T.ShapeError(
            f"content_loss: pred {pred.shape} vs target {target.shape}")
    return T.mean_all(T.square(T.sub(pred, target)))


def _check_scores(name: str, scores: Tensor) -> None:
    # endpoints are admitted (the log clamp absorbs them) so that the
    # perfect-discriminator limit evaluates to exactly zero
    d = scores.data
    if not np.all((d >= 0.0) & (d <= 1.0)):
        raise ValueError(f"{name}: scores must lie in [0,1]")


def adversarial_loss(d_scores: Tensor) -> Tensor:
    """Mean of -log d over the batch, each log floored at log(1e-8)."""
    _check_scores("adversarial_loss", d_scores)
    return T.mean_all(T.neg(T.log_clamped(d_scores, 1e-8)))


def discriminator_loss(d_real: Tensor, d_fake: Tensor) -> Tensor:
    """-mean[log d_real + log(1 - d_fake)], logs floored at log(1e-8)."""
    _check_scores("discriminator_loss", d_real)
    _check_scores("discriminator_loss", d_fake)
    ones = Tensor(np.ones_like(d_fake.data))
    real_term = T.mean_all(T.log_clamped(d_real, 1e-8))
    fake_term = T.mean_all(T.log_clamped(T.sub(ones, d_fake), 1e-8))
    return T.neg(T.add(real_term, fake_term))


def total_loss(mse: Tensor, adv: Tensor, lambda_adv: float) -> Tensor:
    return T.add(mse, T.scale(adv, lambda_adv))


# -- optimizer -------------------------------------------------------------


class SGD:
    """Heavy-ball SGD: v <- momentum*v + grad; p <- p - lr*v."""

    def __init__(self, params: dict[str, Tensor], lr: float, momentum: float = 0.9):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self) -> None:
        for name, p in self.params.items():
            if p.grad is None:
                continue
            v = self.velocity[name]
            v *= self.momentum
            v += p.grad
            p.data -= self.lr * v


def make_optimizer(params: dict[str, Tensor], cfg: TrainConfig) -> SGD:
    if cfg.optimizer == "sgd":
        return SGD(params, cfg.learning_rate, cfg.momentum)
    raise ValueError(f"unknown optimizer {cfg.optimizer!r}")


# -- train log -------------------------------------------------------------


LOG_MAGIC = "liquiform-log v1"
LOG_COLUMNS = ("step", "stage", "l_mse", "l_adv", "l_total",
               "d_loss", "d_real", "d_fake")


@dataclass(frozen=True)
class StepRecord:
    step: int
    stage: int
    l_mse: float
    l_adv: float
    l_total: float
    d_loss: float
    d_real: float
    d_fake: float


class TrainLog:
    def __init__(self, records: Optional[list[StepRecord]] = None):
        self.records: list[StepRecord] = list(records or [])

    def append(self, rec: StepRecord) -> None:
        values = (rec.l_mse, rec.l_adv, rec.l_total,
                  rec.d_loss, rec.d_real, rec.d_fake)
        if not all(np.isfinite(v) for v in values):
            raise ValueError(f"non-finite value in log record at step {rec.step}")
        if self.records and rec.step <= self.records[-1].step:
            raise ValueError(
                f"step numbers must increase: {self.records[-1].step} then {rec.step}")
        self.records.append(rec)

    def write(self, path) -> None:
        lines = [LOG_MAGIC, "\t".join(LOG_COLUMNS)]
        for r in self.records:
            lines.append("\t".join([
                str(r.step), str(r.stage), repr(r.l_mse), repr(r.l_adv),
                repr(r.l_total), repr(r.d_loss), repr(r.d_real), repr(r.d_fake)]))
        tmp = f"{path}.tmp{os.getpid()}"
        try:
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write("\n".join(lines) + "\n")
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    @classmethod
    def read(cls, path) -> "TrainLog":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0] != LOG_MAGIC:
            raise ValueError(f"not a training log: {path}")
        if len(lines) < 2 or tuple(lines[1].split("\t")) != LOG_COLUMNS:
            raise ValueError(f"bad column header in {path}")
        log = cls()
        for i, line in enumerate(lines[2:], start=3):
            parts = line.split("\t")
            if len(parts) != len(LOG_COLUMNS):
                raise ValueError(f"{path}:{i}: expected {len(LOG_COLUMNS)} columns")
            log.append(StepRecord(int(parts[0]), int(parts[1]),
                                  *[float(p) for p in parts[2:]]))
        return log


# -- checkpoints -----------------------------------------------------------


CKPT_MAGIC = b"LQFYCKPT"
CKPT_VERSION = 1


def _checkpoint_entries(net: Network):
    for name, p in net.params.items():
        yield name, p.data
    for name, st in net.bn_states.items():
        yield f"{name}.running_mean", st.mean
        yield f"{name}.running_var", st.var


def save_checkpoint(net: Network, path) -> None:
    chunks = [CKPT_MAGIC, struct.pack("<H", CKPT_VERSION)]
    for name, arr in _checkpoint_entries(net):
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(b"".join(chunks))
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def read_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise CheckpointError(f"truncated checkpoint: {path}")
        out = blob[pos:pos + n]
        pos += n
        return out

    if take(len(CKPT_MAGIC)) != CKPT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic in {path}")
    (version,) = struct.unpack("<H", take(2))
    if version != CKPT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version} in {path}")
    entries: dict[str, np.ndarray] = {}
    while pos < len(blob):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        data = np.frombuffer(take(4 * count), dtype="<f4").reshape(dims)
        if name in entries:
            raise CheckpointError(f"duplicate entry {name!r} in {path}")
        entries[name] = data.copy()
    return entries


def load_checkpoint(path, net: Network) -> None:
    entries = read_checkpoint(path)
    expected = dict(_checkpoint_entries(net))
    missing = sorted(set(expected) - set(entries))
    extra = sorted(set(entries) - set(expected))
    if missing or extra:
        raise CheckpointError(
            f"checkpoint does not match network {net.name!r}: "
            f"missing {missing[:3]}, unexpected {extra[:3]}")
    for name, arr in entries.items():
        if arr.shape != expected[name].shape:
            raise CheckpointError(
                f"shape mismatch for {name!r}: checkpoint {arr.shape}, "
                f"network {expected[name].shape}")
        expected[name][...] = arr.astype(expected[name].dtype)


# -- training loops --------------------------------------------------------


def _require_finite(step: int, quantity: str, value) -> None:
    arr = value.data if isinstance(value, Tensor) else np.asarray(value)
    if not np.all(np.isfinite(arr)):
        raise TrainingDiverged(step, quantity)


def train_stage(G: Network, D: Network, manifest: ds.DatasetManifest,
                cfg: TrainConfig, *, split_name: str = "train", stage: int = 1,
                input_transform: Optional[Callable[[Tensor], Tensor]] = None,
                ) -> TrainLog:
    """Alternating GAN training of one generator/discriminator pair.

    During the first ``cfg.pretrain_epochs`` epochs the generator trains
    on content loss alone (lambda forced to 0) and the discriminator is
    evaluated without gradients purely to populate the log.
    """
    g_opt = make_optimizer(G.params, cfg)
    d_opt = make_optimizer(D.params, cfg)
    log = TrainLog()
    try:
        _run_stage_epochs(G, D, manifest, cfg, split_name, stage,
                          input_transform, g_opt, d_opt, log)
    except TrainingDiverged as exc:
        exc.log = log  # callers can persist the steps completed so far
        raise
    return log


def _run_stage_epochs(G, D, manifest, cfg, split_name, stage,
                      input_transform, g_opt, d_opt, log) -> None:
    step = 0
    for epoch in range(cfg.pretrain_epochs + cfg.epochs):
        pretrain = epoch < cfg.pretrain_epochs
        for batch in ds.iter_batches(manifest, split_name, cfg.batch_size,
                                     cfg.seed, epoch):
            x, y = batch.distorted, batch.original
            if input_transform is not None:
                x = input_transform(x)
            fake = G.forward(x, train=True)
            _require_finite(step, "generator output", fake)

            if pretrain:
                with T.no_grad():
                    d_real = D.forward(y, train=False)
                    d_fake = D.forward(fake.detach(), train=False)
                    _require_finite(step, "discriminator scores", d_real)
                    _require_finite(step, "discriminator scores", d_fake)
                    d_loss_val = discriminator_loss(d_real, d_fake).item()
                    adv = adversarial_loss(d_fake)
                lam = 0.0
            else:
                for _ in range(cfg.d_steps_per_g_step):
                    d_real = D.forward(y, train=True)
                    d_fake = D.forward(fake.detach(), train=True)
                    _require_finite(step, "discriminator scores", d_real)
                    _require_finite(step, "discriminator scores", d_fake)
                    d_loss = discriminator_loss(d_real, d_fake)
                    _require_finite(step, "discriminator loss", d_loss)
                    D.zero_grads()
                    d_loss.backward()
                    d_opt.step()
                d_loss_val = d_loss.item()
                adv_scores = D.forward(fake, train=True)
                _require_finite(step, "discriminator scores", adv_scores)
                adv = adversarial_loss(adv_scores)
                lam = cfg.lambda_adv

            mse = content_loss(fake, y)
            # scaling by 1.0 is an exact identity, so the default path is
            # bit-for-bit the total_loss composition
            total = T.add(T.scale(mse, cfg.mse_weight), T.scale(adv, lam))
            _require_finite(step, "content loss", mse)
            _require_finite(step, "adversarial loss", adv)
            _require_finite(step, "total loss", total)
            G.zero_grads()
            total.backward()
            g_opt.step()

            log.append(StepRecord(
                step, stage, mse.item(), adv.item(), total.item(), d_loss_val,
                float(d_real.data.mean()), float(d_fake.data.mean())))
            step += 1


@dataclass
class PipelineResult:
    stage1: Network
    stage2: Optional[Network]
    log1: TrainLog
    log2: Optional[TrainLog]


def _stage_seeds(seed: int) -> list[int]:
    return [int(s) for s in np.random.default_rng(seed).integers(2 ** 62, size=4)]


def train_pipeline(manifest: ds.DatasetManifest, model_cfg: NetworkConfig,
                   cfg: TrainConfig, stage2_cfg: Optional[TrainConfig] = None,
                   *, split_name: str = "train") -> PipelineResult:
    """Stage 1 on raw distortions, then stage 2 on frozen stage-1 outputs."""
    stage2_cfg = cfg if stage2_cfg is None else stage2_cfg
    s1, s2, s3, s4 = _stage_seeds(cfg.seed)
    g1 = build_rectification(model_cfg, seed=s1)
    d1 = build_discriminator(model_cfg, seed=s2)
    log1 = train_stage(g1, d1, manifest, cfg, split_name=split_name, stage=1)

    if stage2_cfg.pretrain_epochs + stage2_cfg.epochs == 0:
        return PipelineResult(g1, None, log1, None)

    def stage1_outputs(x: Tensor) -> Tensor:
        with T.no_grad():
            return g1.forward(x, train=False)

    g2 = build_refinement(model_cfg, seed=s3)
    d2 = build_discriminator(model_cfg, seed=s4)
    log2 = train_stage(g2, d2, manifest, stage2_cfg, split_name=split_name,
                       stage=2, input_transform=stage1_outputs)
    return PipelineResult(g1, g2, log1, log2)


def restore(x: Tensor, stage1: Network, stage2: Optional[Network] = None) -> Tensor:
    """Full eval-mode cascade; stage 2 is skipped when absent."""
    with T.no_grad():
        out = stage1.forward(x, train=False)
        if stage2 is not None:
            out = stage2.forward(out, train=False)
    return out
