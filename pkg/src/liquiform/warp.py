"""Radial image warping.

The distortion maps polar coordinates about a center as r' = k*r with the
angle unchanged: k < 1 bulges (convex), k > 1 pinches (concave), k = 1 is
the identity.  Synthesis uses backward resampling: each destination pixel
inside the effect region takes the bilinear sample of the source at
radius r'/k on the same ray, so no splatting holes appear.  The analytic
inverse (k -> 1/k) serves as a ground-truth restorer when k is known.

Geometry is evaluated in a symmetric fixed-point scheme: offsets from the
center are measured in half-pixel units and quantized to 2^-40 of a unit
before interpolation.  Interpolation weights are then exact dyadic
rationals, which makes the warp exactly equivariant under the symmetries
of the pixel grid (rot90/flips about the image center) and bit-exact for
k = 1, while the ~5e-13 px position rounding is far below any metric.

Images are numpy arrays of shape (H, W, C), C in {1, 3}, values in [0,1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

_SHIFT = 40
_ONE = 1 << _SHIFT


class PolarCoord(NamedTuple):
    r: float
    theta: float


@dataclass(frozen=True)
class WarpSpec:
    """One radial effect: scaling factor, center and region of influence.

    ``center`` of None means the image center; ``region_radius`` of None
    means the inscribed circle.  Out-of-bounds source samples clamp to
    the nearest valid coordinate.
    """

    k: float
    center: Optional[tuple[float, float]] = None
    region_radius: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.k) and self.k > 0):
            raise ValueError(f"scaling factor k must be positive and finite, got {self.k}")
        if self.center is not None:
            cx, cy = self.center
            if not (math.isfinite(cx) and math.isfinite(cy)):
                raise ValueError(f"center must be finite, got {self.center}")
        if self.region_radius is not None and not (
                math.isfinite(self.region_radius) and self.region_radius > 0):
            raise ValueError(f"region_radius must be positive, got {self.region_radius}")

    def resolve(self, height: int, width: int) -> tuple[float, float, float]:
        """Concrete (cx, cy, radius) for an image of the given extent."""
        cx, cy = self.center if self.center is not None else ((width - 1) / 2.0,
                                                             (height - 1) / 2.0)
        radius = self.region_radius if self.region_radius is not None else min(height, width) / 2.0
        diagonal = math.hypot(height, width)
        if radius > diagonal:
            raise ValueError(
                f"region_radius {radius} exceeds the image diagonal {diagonal:.3f}")
        return float(cx), float(cy), float(radius)


def warp_spec_to_text(spec: WarpSpec) -> str:
    """Plain-text form, one field per line; inverse of warp_spec_from_text."""
    center = "auto" if spec.center is None else f"{spec.center[0]!r} {spec.center[1]!r}"
    region = "full" if spec.region_radius is None else repr(spec.region_radius)
    return (f"liquiform-warp v1\nk = {spec.k!r}\ncenter = {center}\n"
            f"region_radius = {region}\n")


def warp_spec_from_text(text: str) -> WarpSpec:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "liquiform-warp v1":
        raise ValueError("warp spec text must start with 'liquiform-warp v1'")
    fields = {}
    for ln in lines[1:]:
        key, _, value = ln.partition("=")
        key, value = key.strip(), value.strip()
        if key in fields:
            raise ValueError(f"duplicate warp spec field {key!r}")
        fields[key] = value
    unknown = set(fields) - {"k", "center", "region_radius"}
    if unknown:
        raise ValueError(f"unknown warp spec fields: {sorted(unknown)}")
    if "k" not in fields:
        raise ValueError("warp spec text is missing the k field")
    center: Optional[tuple[float, float]] = None
    if fields.get("center", "auto") != "auto":
        parts = fields["center"].split()
        if len(parts) != 2:
            raise ValueError(f"center needs two values, got {fields['center']!r}")
        center = (float(parts[0]), float(parts[1]))
    region: Optional[float] = None
    if fields.get("region_radius", "full") != "full":
        region = float(fields["region_radius"])
    return WarpSpec(k=float(fields["k"]), center=center, region_radius=region)


def to_polar(x: float, y: float, center: tuple[float, float]) -> PolarCoord:
    """Polar coordinates of a pixel about a center; r = 0 gets theta = 0."""
    dx = x - center[0]
    dy = y - center[1]
    r = math.hypot(dx, dy)
    if r == 0.0:
        return PolarCoord(0.0, 0.0)
    theta = math.atan2(dy, dx)
    if theta == -math.pi:
        theta = math.pi
    return PolarCoord(r, theta)


def _check_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] not in (1, 3):
        raise ValueError(f"image must have shape (H, W, C) with C in {{1, 3}}, "
                         f"got {image.shape}")
    if image.shape[0] < 2 or image.shape[1] < 2:
        raise ValueError(f"image extents must be >= 2, got {image.shape[:2]}")
    return image


def _quantize_offsets(off: np.ndarray, limit: int) -> np.ndarray:
    """Round half-pixel offsets to int64 multiples of 2^-40, clamped to +/-limit.

    rint ties-to-even is odd under negation, so mirrored offsets quantize
    to mirrored integers; the clamp range is symmetric for the same reason.
    """
    scaled = np.clip(off * float(_ONE), -float(limit << _SHIFT), float(limit << _SHIFT))
    return np.rint(scaled).astype(np.int64)


def _gather_bilinear(image: np.ndarray, uq: np.ndarray, vq: np.ndarray) -> np.ndarray:
    """Sample image at quantized half-pixel offsets from the image center.

    uq/vq are int64 offsets in 2^-40 half-pixel units, already clamped to
    the valid rectangle.  Weights come out as exact dyadic rationals and
    the four taps are combined as (diagonal pair) + (antidiagonal pair),
    so grid symmetries permute the summands without changing the result.
    """
    h, w = image.shape[:2]

    def axis_indices(q, n):
        m = q >> _SHIFT
        gq = q - (m << _SHIFT)
        num = (n - 1) + m          # >= 0 after clamping
        i0 = num >> 1
        frac_q = gq + ((num & 1) << _SHIFT)
        frac = frac_q.astype(np.float64) * (0.5 ** (_SHIFT + 1))
        i1 = np.minimum(i0 + 1, n - 1)
        return i0, i1, frac

    x0, x1, fx = axis_indices(uq, w)
    y0, y1, fy = axis_indices(vq, h)
    wx1, wx0 = fx, 1.0 - fx
    wy1, wy0 = fy, 1.0 - fy

    p00 = image[y0, x0]
    p01 = image[y0, x1]
    p10 = image[y1, x0]
    p11 = image[y1, x1]
    w00 = (wy0 * wx0)[..., None]
    w01 = (wy0 * wx1)[..., None]
    w10 = (wy1 * wx0)[..., None]
    w11 = (wy1 * wx1)[..., None]
    return (w00 * p00 + w11 * p11) + (w01 * p01 + w10 * p10)


def bilinear_sample(image: np.ndarray, x, y) -> np.ndarray:
    """Bilinear sample at absolute pixel coordinates, edge-clamped.

    Integer coordinates return the stored pixel exactly.  Scalar (x, y)
    yields a (C,) vector; array coordinates yield shape x.shape + (C,).
    """
    image = _check_image(image)
    h, w = image.shape[:2]
    scalar = np.isscalar(x) and np.isscalar(y)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    uq = _quantize_offsets(2.0 * x - (w - 1), w - 1)
    vq = _quantize_offsets(2.0 * y - (h - 1), h - 1)
    work = image.astype(np.float64, copy=False)
    out = _gather_bilinear(work, uq, vq)
    out = np.clip(out, 0.0, 1.0).astype(image.dtype, copy=False)
    return out[0] if scalar and out.ndim > 1 else out


def distort(image: np.ndarray, spec: WarpSpec) -> np.ndarray:
    """Apply one radial effect by backward resampling.

    Destination pixels with radius at most region_radius about the center
    sample the source at radius r/k on the same ray; all other pixels are
    copied unchanged.  k = 1 returns a bit-identical copy.
    """
    image = _check_image(image)
    h, w = image.shape[:2]
    cx, cy, radius = spec.resolve(h, w)
    if spec.k == 1.0:
        return image.copy()

    centered = spec.center is None or (cx == (w - 1) / 2.0 and cy == (h - 1) / 2.0)
    jj = np.arange(w, dtype=np.int64)
    ii = np.arange(h, dtype=np.int64)
    if centered:
        # doubled offsets are exact integers; the region test stays integral
        dx2 = (2 * jj - (w - 1))[None, :]
        dy2 = (2 * ii - (h - 1))[:, None]
        r2_quad = dx2 * dx2 + dy2 * dy2            # 4 * r^2, exact
        inside = r2_quad <= 4.0 * radius * radius
        u = dx2 / spec.k
        v = dy2 / spec.k
    else:
        dx = jj[None, :].astype(np.float64) - cx
        dy = ii[:, None].astype(np.float64) - cy
        inside = dx * dx + dy * dy <= radius * radius
        u = 2.0 * dx / spec.k + (2.0 * cx - (w - 1))
        v = 2.0 * dy / spec.k + (2.0 * cy - (h - 1))

    uq = _quantize_offsets(np.broadcast_to(u, (h, w)), w - 1)
    vq = _quantize_offsets(np.broadcast_to(v, (h, w)), h - 1)
    work = image.astype(np.float64, copy=False)
    sampled = np.clip(_gather_bilinear(work, uq, vq), 0.0, 1.0)
    out = image.copy()
    out[inside] = sampled.astype(image.dtype, copy=False)[inside]
    return out


def analytic_restore(image: np.ndarray, spec: WarpSpec) -> np.ndarray:
    """Invert a known distortion by applying the reciprocal factor."""
    inverse = WarpSpec(k=1.0 / spec.k, center=spec.center,
                       region_radius=spec.region_radius)
    return distort(image, inverse)


def compose(image: np.ndarray, specs: Sequence[WarpSpec]) -> np.ndarray:
    """Apply several effects in list order; the empty list copies the input."""
    out = _check_image(image).copy()
    for spec in specs:
        out = distort(out, spec)
    return out
