"""Command-line front end: distort, gen-dataset, train, restore, eval, selfcheck.

Every subcommand is deterministic given its flags and seeds.  Exit codes
are stable: 0 success, 1 unreadable or unwritable files, 2 bad arguments
or malformed inputs, 3 training hit a non-finite value, 4 a selfcheck
failed.  Configuration flows defaults -> --config file -> flags; the
full key table is printed at the end of --help.
"""

from __future__ import annotations

import argparse
import contextlib
import math
import os
import sys
import tempfile
import time
from typing import Optional, Sequence

import numpy as np

from . import config
from . import dataset as ds
from . import fixtures
from . import imgio
from . import metrics
from . import tensor as T
from . import training
from . import warp
from .models import NetworkConfig, build_discriminator, build_rectification, build_refinement
from .tensor import Tensor
from .training import TrainingDiverged

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_SELFCHECK = 4

# ops exercised by the selfcheck gradient probes; --corrupt-grad takes one
GRAD_CHECK_OPS = ("add", "mul", "dense", "conv2d", "sigmoid", "prelu", "log_clamped")


def _write_text(path, text: str) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


# -- config plumbing -------------------------------------------------------


def _merged_config(args, flag_map: dict[str, str],
                   extra: Optional[dict[str, object]] = None) -> dict[str, object]:
    """defaults -> config file -> --set pairs -> named flags."""
    layers = []
    if getattr(args, "config", None):
        layers.append(config.parse_file(args.config))
    overrides: dict[str, object] = {}
    for item in getattr(args, "set", None) or []:
        path, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"--set needs section.key=value, got {item!r}")
        overrides[path.strip()] = config.parse_override(path.strip(), raw.strip())
    for attr, path in flag_map.items():
        raw = getattr(args, attr, None)
        if raw is not None:
            overrides[path] = config.parse_override(path, raw)
    if extra:
        overrides.update(extra)
    layers.append(overrides)
    return config.merge(*layers)


def _add_config_flags(sub) -> None:
    sub.add_argument("--config", metavar="FILE",
                     help="INI config file (sections [warp] [train] [model] [data])")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override one config key, e.g. --set train.epochs=5")


# -- distort ---------------------------------------------------------------


_DISTORT_FLAGS = {"k": "warp.k", "center": "warp.center", "region": "warp.region"}


def _parse_compose(text: str) -> list[warp.WarpSpec]:
    """Split concatenated warp spec blocks on their header lines."""
    blocks: list[list[str]] = []
    for line in text.splitlines():
        if line.strip() == "liquiform-warp v1":
            blocks.append([line])
        elif line.strip():
            if not blocks:
                raise ValueError(
                    "compose file must start with 'liquiform-warp v1'")
            blocks[-1].append(line)
    if not blocks:
        raise ValueError("compose file contains no warp specs")
    return [warp.warp_spec_from_text("\n".join(b)) for b in blocks]


def cmd_distort(args) -> int:
    if args.compose is not None and (args.k or args.center or args.region):
        raise ValueError("--compose replaces --k/--center/--region; pass one or the other")
    image = imgio.read_image(args.in_path)
    if args.compose is not None:
        with open(args.compose, encoding="utf-8") as fh:
            specs = _parse_compose(fh.read())
        out = warp.compose(image, specs)
    else:
        cfg = _merged_config(args, _DISTORT_FLAGS)
        spec = warp.WarpSpec(k=cfg["warp.k"], center=cfg["warp.center"],
                             region_radius=cfg["warp.region"])
        out = warp.distort(image, spec)
    imgio.write_image(args.out_path, out)
    return EXIT_OK


# -- gen-dataset -----------------------------------------------------------


_GEN_FLAGS = {"ks": "data.ks", "size": "data.size",
              "test_frac": "data.test_frac", "seed": "data.seed"}


def cmd_gen_dataset(args) -> int:
    extra = {"data.all_k": True} if args.all_k else None
    cfg = _merged_config(args, _GEN_FLAGS, extra)
    side = cfg["data.size"]
    manifest = ds.generate(args.src, args.out, k_list=cfg["data.ks"],
                           size=(side, side), seed=cfg["data.seed"],
                           all_k=cfg["data.all_k"])
    if cfg["data.test_frac"] > 0:
        manifest = ds.split(manifest, cfg["data.test_frac"], cfg["data.seed"])
    path = os.path.join(args.out, "manifest.tsv")
    ds.write_manifest(manifest, path)
    n_test = len(manifest.for_split("test"))
    print(f"wrote {len(manifest.records)} pairs ({n_test} test) to {path}")
    return EXIT_OK


# -- train -----------------------------------------------------------------


_TRAIN_FLAGS = {"lambda_adv": "train.lambda_adv", "lr": "train.learning_rate",
                "epochs": "train.epochs", "pretrain_epochs": "train.pretrain_epochs",
                "batch_size": "train.batch_size", "seed": "train.seed",
                "base_channels": "model.base_channels", "image_size": "model.image_size"}


def _check_manifest_matches(manifest: ds.DatasetManifest, ncfg: NetworkConfig) -> None:
    records = manifest.for_split("train")
    if not records:
        raise ValueError("manifest has no training pairs")
    probe = imgio.read_image(manifest.resolve(records[0].distorted_path))
    h, w, c = probe.shape
    if (h, w) != ncfg.image_size or c != ncfg.input_channels:
        eh, ew = ncfg.image_size
        raise ValueError(
            f"manifest images are {h}x{w}x{c} but the model is configured for "
            f"{eh}x{ew}x{ncfg.input_channels}; set model.image_size "
            f"(--image-size) and model.input_channels to match")


def _train_one(g, d, manifest, tcfg, stage: int, input_transform,
               out_dir: str, tag: str) -> None:
    log_path = os.path.join(out_dir, f"{tag}.log")
    try:
        log = training.train_stage(g, d, manifest, tcfg, stage=stage,
                                   input_transform=input_transform)
    except TrainingDiverged as exc:
        partial = getattr(exc, "log", None)
        if partial is not None and partial.records:
            partial.write(log_path)
            print(f"{tag}: diverged, partial log kept at {log_path}",
                  file=sys.stderr)
        raise
    log.write(log_path)
    training.save_checkpoint(g, os.path.join(out_dir, f"{tag}.ckpt"))
    last = log.records[-1] if log.records else None
    tail = f", final content loss {last.l_mse:.6f}" if last else ""
    print(f"{tag}: {len(log.records)} steps{tail}")


def cmd_train(args) -> int:
    cfg = _merged_config(args, _TRAIN_FLAGS)
    tcfg = config.train_config_from(cfg)
    ncfg = config.network_config_from(cfg)
    manifest = ds.read_manifest(args.manifest)
    _check_manifest_matches(manifest, ncfg)
    if args.resume and args.stage == "all":
        raise ValueError("--resume needs --stage 1 or --stage 2")
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    s1, s2, s3, s4 = training._stage_seeds(tcfg.seed)

    g1 = build_rectification(ncfg, seed=s1)
    if args.stage in ("1", "all"):
        if args.resume:
            training.load_checkpoint(os.path.join(out_dir, "stage1.ckpt"), g1)
        d1 = build_discriminator(ncfg, seed=s2)
        _train_one(g1, d1, manifest, tcfg, 1, None, out_dir, "stage1")
    else:
        training.load_checkpoint(os.path.join(out_dir, "stage1.ckpt"), g1)

    if args.stage in ("2", "all"):
        def stage1_outputs(x: Tensor) -> Tensor:
            with T.no_grad():
                return g1.forward(x, train=False)

        g2 = build_refinement(ncfg, seed=s3)
        if args.resume:
            training.load_checkpoint(os.path.join(out_dir, "stage2.ckpt"), g2)
        d2 = build_discriminator(ncfg, seed=s4)
        _train_one(g2, d2, manifest, tcfg, 2, stage1_outputs, out_dir, "stage2")
    return EXIT_OK


# -- restore ---------------------------------------------------------------


def _load_generator(path, image_size: tuple[int, int]):
    """Build the matching net from a checkpoint's own entry shapes."""
    entries = training.read_checkpoint(path)
    if "enc1.conv1.w" in entries:
        shape, builder, div = entries["enc1.conv1.w"].shape, build_rectification, 16
    elif "stem.conv.w" in entries:
        shape, builder, div = entries["stem.conv.w"].shape, build_refinement, 4
    else:
        raise training.CheckpointError(
            f"{path} is not a rectification or refinement checkpoint")
    cfg = NetworkConfig(input_channels=int(shape[1]), base_channels=int(shape[0]),
                        image_size=image_size)
    net = builder(cfg, seed=0)
    training.load_checkpoint(path, net)
    return net, div


def cmd_restore(args) -> int:
    image = imgio.read_image(args.in_path)
    h, w, c = image.shape
    # read both checkpoints first so the divisibility demand fits the nets
    entries1 = training.read_checkpoint(args.ckpt1)
    div = 16 if "enc1.conv1.w" in entries1 else 4
    if h % div or w % div or min(h, w) < 2 * div:
        raise ValueError(
            f"input is {h}x{w}; restoration needs sides divisible by {div} "
            f"(and at least {2 * div}) - pad or resize the image first")
    stage1, _ = _load_generator(args.ckpt1, (h, w))
    stage2 = _load_generator(args.ckpt2, (h, w))[0] if args.ckpt2 else None
    in_ch = stage1.config.input_channels
    if c != in_ch:
        raise ValueError(f"input has {c} channels but the model expects {in_ch}")
    out = metrics.network_restorer(stage1, stage2)(image)
    imgio.write_image(args.out_path, out)
    return EXIT_OK


# -- eval ------------------------------------------------------------------


def cmd_eval(args) -> int:
    manifest = ds.read_manifest(args.manifest)
    chosen = [bool(args.ckpt1), args.oracle_k, args.identity]
    if sum(chosen) != 1:
        raise ValueError("choose exactly one of --ckpt1, --oracle-k, --identity")
    if args.ckpt2 and not args.ckpt1:
        raise ValueError("--ckpt2 needs --ckpt1")

    if args.identity:
        name = "identity"
        cells = metrics.evaluate(metrics.identity_restorer, manifest, args.split)
    elif args.oracle_k:
        def oracle(image, k):
            return warp.analytic_restore(image, warp.WarpSpec(k=k))

        name = "oracle_k"
        cells = metrics.evaluate(oracle, manifest, args.split, k_aware=True)
    else:
        records = manifest.for_split(args.split)
        if not records:
            raise ValueError(f"no pairs in split {args.split!r}")
        probe = imgio.read_image(manifest.resolve(records[0].distorted_path))
        stage1, _ = _load_generator(args.ckpt1, probe.shape[:2])
        stage2 = (_load_generator(args.ckpt2, probe.shape[:2])[0]
                  if args.ckpt2 else None)
        name = "full" if stage2 is not None else "only_rectification"
        cells = metrics.evaluate(metrics.network_restorer(stage1, stage2),
                                 manifest, args.split)

    report = metrics.EvalReport()
    report.add_row(name, cells)
    os.makedirs(args.out_dir, exist_ok=True)
    _write_text(os.path.join(args.out_dir, "report.txt"), report.to_table())
    _write_text(os.path.join(args.out_dir, "report.tsv"), report.to_records())
    print(report.to_table(), end="")
    return EXIT_OK


# -- selfcheck -------------------------------------------------------------


@contextlib.contextmanager
def _corrupted_grad(op_name: str):
    """Test hook: make one op report gradients scaled by 1.5."""
    original = getattr(T, op_name)

    def wrapped(*fn_args, **fn_kwargs):
        out = original(*fn_args, **fn_kwargs)
        node = getattr(out, "_node", None)
        if node is not None:
            inner = node.grad_fn
            node.grad_fn = lambda g: tuple(
                None if pg is None else pg * 1.5 for pg in inner(g))
        return out

    setattr(T, op_name, wrapped)
    try:
        yield
    finally:
        setattr(T, op_name, original)


def _grad_probe_inputs(name: str):
    rng = np.random.default_rng(11)

    def t(shape, lo=0.1, hi=0.9):
        return Tensor(rng.uniform(lo, hi, shape), requires_grad=True)

    if name == "add":
        return (t((3, 4)), t((3, 4))), lambda a, b: T.add(a, b)
    if name == "mul":
        return (t((3, 4)), t((3, 4))), lambda a, b: T.mul(a, b)
    if name == "dense":
        return (t((2, 5)), t((5, 3)), t((3,))), lambda x, w, b: T.dense(x, w, b)
    if name == "conv2d":
        return ((t((1, 2, 6, 6)), t((3, 2, 3, 3)), t((3,))),
                lambda x, w, b: T.conv2d(x, w, b, stride=1, padding=1))
    if name == "sigmoid":
        return (t((3, 4), -2.0, 2.0),), lambda a: T.sigmoid(a)
    if name == "prelu":
        # keep |x| >= 0.1 so central differences never straddle the kink
        x = Tensor(rng.uniform(0.1, 0.9, (2, 3, 4, 4))
                   * rng.choice([-1.0, 1.0], (2, 3, 4, 4)), requires_grad=True)
        s = Tensor(np.full(3, 0.25), requires_grad=True)
        return (x, s), lambda x, s: T.prelu(x, s)
    if name == "log_clamped":
        return (t((3, 4)),), lambda a: T.log_clamped(a)
    raise ValueError(f"no gradient probe for op {name!r}")


def _check_grad(op_name: str, corrupt: bool):
    ctx = _corrupted_grad(op_name) if corrupt else contextlib.nullcontext()
    with ctx:
        tensors, fn = _grad_probe_inputs(op_name)
        T.mean_all(fn(*tensors)).backward()
        analytic = [t.grad.copy() for t in tensors]
        h, worst = 1e-6, 0.0
        for tensor, ga in zip(tensors, analytic):
            flat, gflat = tensor.data.reshape(-1), ga.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                hi = float(T.mean_all(fn(*tensors)).data)
                flat[i] = orig - h
                lo = float(T.mean_all(fn(*tensors)).data)
                flat[i] = orig
                gn = (hi - lo) / (2.0 * h)
                worst = max(worst, abs(gflat[i] - gn) / max(1.0, abs(gn)))
    if worst > 1e-5:
        return False, f"max relative gradient error {worst:.2e} > 1e-05"
    return True, f"max relative gradient error {worst:.2e}"


def _check_warp_identity():
    bull = fixtures.bullseye()
    if not np.array_equal(warp.distort(bull, warp.WarpSpec(k=1.0)), bull):
        return False, "k=1 changed the bullseye"
    rng = np.random.default_rng(0)
    for i in range(3):
        img = rng.random((48, 40, 3), dtype=np.float32)
        if not np.array_equal(warp.distort(img, warp.WarpSpec(k=1.0)), img):
            return False, f"k=1 changed random image {i}"
    return True, "k=1 is bit-exact"


def _check_warp_roundtrip():
    bull = fixtures.bullseye()
    size = bull.shape[0]
    worst = (None, float("inf"))
    for k in (0.5, 0.8, 1.5, 2.7):
        spec = warp.WarpSpec(k=k)
        back = warp.analytic_restore(warp.distort(bull, spec), spec)
        # the seam annulus and, for k > 1, the region beyond the zoomed
        # source disk cannot survive a round trip; score inside them
        mask = fixtures.disk_mask(size, 0.8 * (size / 2.0) * min(1.0, 1.0 / k))
        diff = (back.astype(np.float64) - bull.astype(np.float64))[mask]
        mse = float((diff * diff).mean())
        db = 100.0 if mse == 0.0 else 10.0 * math.log10(1.0 / mse)
        if db < worst[1]:
            worst = (k, db)
        if db < 30.0:
            return False, f"k={k} interior PSNR {db:.1f} dB < 30 dB"
    return True, f"worst interior PSNR {worst[1]:.1f} dB at k={worst[0]}"


def _first_ring_radius(profile: np.ndarray, threshold: float = 0.97) -> float:
    """Centroid of the first above-threshold run past the center bump."""
    run: list[float] = []
    for i, v in enumerate(profile):
        if v > threshold:
            run.append(i + 0.5)
        elif run:
            if run[0] != 0.5:
                return sum(run) / len(run)
            run = []
    return float("nan")


def _check_ring_scale():
    bull = fixtures.bullseye()
    out = warp.distort(bull, warp.WarpSpec(k=0.5))
    mid = bull.shape[0] // 2 - 1
    src = _first_ring_radius(bull[mid, mid + 1:, 0])
    got = _first_ring_radius(out[mid, mid + 1:, 0])
    if abs(src - 24.0) > 0.6:
        return False, f"fixture first ring at {src:.1f} px, expected 24"
    if abs(got - 12.0) > 1.5:
        return False, f"k=0.5 moved the first ring to {got:.1f} px, expected 12"
    return True, f"k=0.5 moved the first ring {src:.1f} -> {got:.1f} px"


def _check_psnr():
    rng = np.random.default_rng(5)
    a = rng.uniform(0.2, 0.9, (21, 17, 3))
    if metrics.psnr(a, a) != 100.0:
        return False, "identical pair did not cap at 100 dB"
    p = metrics.psnr(a, a - 0.1)
    if abs(p - 20.0) > 1e-9:
        return False, f"uniform 0.1 offset gave {p!r} dB, expected 20"
    b = rng.uniform(0.0, 1.0, a.shape)
    want = 10.0 * math.log10(1.0 / float(np.mean((a - b) ** 2)))
    if abs(metrics.psnr(a, b) - want) > 1e-9:
        return False, "disagrees with the direct formula"
    return True, "cap, 20 dB offset and direct formula agree"


def _check_ssim():
    rng = np.random.default_rng(6)
    a = rng.uniform(0.0, 1.0, (16, 16, 3))
    if metrics.ssim(a, a) != 1.0:
        return False, "self-similarity is not exactly 1"
    b = rng.uniform(0.0, 1.0, a.shape)
    s_ab, s_ba = metrics.ssim(a, b), metrics.ssim(b, a)
    if abs(s_ab - s_ba) > 1e-12:
        return False, f"asymmetric: {s_ab!r} vs {s_ba!r}"
    if not -1.0 <= s_ab <= 1.0 + 1e-12:
        return False, f"out of range: {s_ab!r}"
    if s_ab >= 0.999:
        return False, "independent noise scored as near-identical"
    return True, "identity, symmetry and range hold"


def _check_codec():
    rng = np.random.default_rng(8)
    img = rng.random((9, 7, 3)).astype(np.float32)
    want = imgio.quantize_u8(img)
    exts = [".ppm"] + ([".png"] if imgio.png_available() else [])
    with tempfile.TemporaryDirectory() as tmp:
        for ext in exts:
            path = os.path.join(tmp, "probe" + ext)
            imgio.write_image(path, img)
            back = imgio.read_image(path)
            if not np.array_equal(imgio.quantize_u8(back), want):
                return False, f"{ext} round trip altered pixels"
    names = " and ".join(e.lstrip(".").upper() for e in exts)
    return True, f"{names} round trips are exact at 8 bits"


def cmd_selfcheck(args) -> int:
    started = time.perf_counter()
    checks = [("warp-identity", _check_warp_identity),
              ("warp-roundtrip", _check_warp_roundtrip),
              ("warp-ring-scale", _check_ring_scale)]
    for op in GRAD_CHECK_OPS:
        checks.append((f"grad-{op}",
                       lambda op=op: _check_grad(op, args.corrupt_grad == op)))
    checks += [("metric-psnr", _check_psnr),
               ("metric-ssim", _check_ssim),
               ("codec-roundtrip", _check_codec)]

    failures = []
    for name, fn in checks:
        t0 = time.perf_counter()
        ok, detail = fn()
        status = "ok  " if ok else "FAIL"
        print(f"{status} {name:<16} {time.perf_counter() - t0:6.2f}s  {detail}")
        if not ok:
            failures.append(name)
    elapsed = time.perf_counter() - started
    if failures:
        print(f"selfcheck FAILED ({', '.join(failures)}) in {elapsed:.1f}s")
        return EXIT_SELFCHECK
    print(f"selfcheck passed: {len(checks)} checks in {elapsed:.1f}s")
    return EXIT_OK


# -- parser / entry --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="liquiform",
        description="Synthesize radial liquify distortions and restore them "
                    "with a two-stage adversarial cascade.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="configuration keys (settable in --config files, overridable "
               "with --set KEY=VALUE):\n\n" + config.key_table())
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("distort", help="apply a radial warp to one image")
    p.add_argument("--in", dest="in_path", required=True, metavar="IMAGE")
    p.add_argument("--out", dest="out_path", required=True, metavar="IMAGE")
    p.add_argument("--k", help="radial scaling factor (default 1.0)")
    p.add_argument("--center", help="effect center 'x,y' or 'auto'")
    p.add_argument("--region", help="affected radius in pixels or 'full'")
    p.add_argument("--compose", metavar="FILE",
                   help="apply every warp spec block in FILE, in order")
    _add_config_flags(p)
    p.set_defaults(func=cmd_distort)

    p = sub.add_parser("gen-dataset",
                       help="distort a folder of images into a paired dataset")
    p.add_argument("--src", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--ks", help="comma-separated k grid (default 0.5,0.8,1.5,2.7)")
    p.add_argument("--size", help="square resize applied to sources (default 224)")
    p.add_argument("--test-frac", dest="test_frac",
                   help="held-out fraction of source images (default 0.02)")
    p.add_argument("--seed", help="k assignment and split seed (default 0)")
    p.add_argument("--all-k", dest="all_k", action="store_true",
                   help="pair every source with every k instead of one draw")
    _add_config_flags(p)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train", help="train the restoration cascade")
    p.add_argument("--manifest", required=True, metavar="FILE")
    p.add_argument("--stage", choices=("1", "2", "all"), default="all")
    p.add_argument("--out-dir", dest="out_dir", default=".",
                   help="where stageN.ckpt and stageN.log land (default .)")
    p.add_argument("--resume", action="store_true",
                   help="continue a single stage from its existing checkpoint")
    p.add_argument("--lambda", dest="lambda_adv", help="adversarial weight")
    p.add_argument("--lr", help="learning rate")
    p.add_argument("--epochs", help="adversarial epochs")
    p.add_argument("--pretrain-epochs", dest="pretrain_epochs",
                   help="content-only warm-up epochs")
    p.add_argument("--batch-size", dest="batch_size")
    p.add_argument("--seed")
    p.add_argument("--base-channels", dest="base_channels")
    p.add_argument("--image-size", dest="image_size",
                   help="square training resolution; must match the manifest")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("restore", help="run trained checkpoints on one image")
    p.add_argument("--in", dest="in_path", required=True, metavar="IMAGE")
    p.add_argument("--ckpt1", required=True, metavar="FILE")
    p.add_argument("--ckpt2", metavar="FILE",
                   help="optional second-stage checkpoint")
    p.add_argument("--out", dest="out_path", required=True, metavar="IMAGE")
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("eval", help="score a restorer over a dataset split")
    p.add_argument("--manifest", required=True, metavar="FILE")
    p.add_argument("--ckpt1", metavar="FILE", help="stage-1 checkpoint")
    p.add_argument("--ckpt2", metavar="FILE", help="stage-2 checkpoint")
    p.add_argument("--oracle-k", dest="oracle_k", action="store_true",
                   help="invert each pair's recorded warp analytically")
    p.add_argument("--identity", action="store_true",
                   help="score the do-nothing baseline")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--out-dir", dest="out_dir", default=".",
                   help="where report.txt and report.tsv land (default .)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selfcheck", help="run the built-in consistency checks")
    p.add_argument("--corrupt-grad", dest="corrupt_grad", choices=GRAD_CHECK_OPS,
                   metavar="OP", help="test hook: sabotage one op's gradient")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())
