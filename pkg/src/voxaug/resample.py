"""Grid resampling kernel: nearest / trilinear sampling of 3D channels.

Conventions used across the engine:

* voxel values sit at voxel centers; index i covers physical span
  ``[i - 0.5, i + 0.5]`` in voxel units, so a volume of X voxels has field of
  view ``X * spacing`` mm.
* nearest neighbor rounds half up: ``floor(x + 0.5)``.
* boundary mode "constant" returns pad_value for out-of-bounds reads (each
  trilinear corner outside the array contributes pad_value); "edge"
  replicates border samples.

Trilinear output is a convex combination of input samples and pad_value, so
it never exceeds their range.
"""

from __future__ import annotations

import numpy as np

from .errors import NonPositiveSpacing
from .geometry import spacing as affine_spacing
from .image import Image, ImageKind

NEAREST = "nearest"
LINEAR = "linear"


def source_coords(target_affine, target_shape, source_affine) -> np.ndarray:
    """Source voxel coordinates of every target voxel center, shape (3, X, Y, Z)."""
    m = np.linalg.inv(source_affine) @ target_affine
    gx = np.arange(target_shape[0], dtype=np.float64)
    gy = np.arange(target_shape[1], dtype=np.float64)
    gz = np.arange(target_shape[2], dtype=np.float64)
    coords = np.empty((3,) + tuple(target_shape), dtype=np.float64)
    for r in range(3):
        coords[r] = (
            m[r, 0] * gx[:, None, None]
            + m[r, 1] * gy[None, :, None]
            + m[r, 2] * gz[None, None, :]
            + m[r, 3]
        )
    return coords


def sample_channel(
    channel: np.ndarray,
    coords: np.ndarray,
    interpolation: str = LINEAR,
    boundary: str = "constant",
    pad_value: float = 0.0,
) -> np.ndarray:
    """Sample one (X, Y, Z) channel at fractional coordinates (3, ...)."""
    shape = channel.shape
    out_shape = coords.shape[1:]
    cx, cy, cz = coords[0].ravel(), coords[1].ravel(), coords[2].ravel()

    if interpolation == NEAREST:
        ix = np.floor(cx + 0.5).astype(np.int64)
        iy = np.floor(cy + 0.5).astype(np.int64)
        iz = np.floor(cz + 0.5).astype(np.int64)
        inside = (
            (ix >= 0) & (ix < shape[0])
            & (iy >= 0) & (iy < shape[1])
            & (iz >= 0) & (iz < shape[2])
        )
        np.clip(ix, 0, shape[0] - 1, out=ix)
        np.clip(iy, 0, shape[1] - 1, out=iy)
        np.clip(iz, 0, shape[2] - 1, out=iz)
        out = channel[ix, iy, iz]
        if boundary == "constant":
            out = np.where(inside, out, np.asarray(pad_value, dtype=channel.dtype))
        return out.reshape(out_shape)

    if interpolation != LINEAR:
        raise ValueError(f"unknown interpolation {interpolation!r}")

    x0 = np.floor(cx).astype(np.int64)
    y0 = np.floor(cy).astype(np.int64)
    z0 = np.floor(cz).astype(np.int64)
    fx = cx - x0
    fy = cy - y0
    fz = cz - z0
    acc = np.zeros(cx.shape, dtype=np.float64)
    for dx in (0, 1):
        wx = fx if dx else 1.0 - fx
        xi = x0 + dx
        for dy in (0, 1):
            wy = fy if dy else 1.0 - fy
            yi = y0 + dy
            for dz in (0, 1):
                wz = fz if dz else 1.0 - fz
                zi = z0 + dz
                w = wx * wy * wz
                if boundary == "edge":
                    vals = channel[
                        np.clip(xi, 0, shape[0] - 1),
                        np.clip(yi, 0, shape[1] - 1),
                        np.clip(zi, 0, shape[2] - 1),
                    ].astype(np.float64)
                else:
                    ok = (
                        (xi >= 0) & (xi < shape[0])
                        & (yi >= 0) & (yi < shape[1])
                        & (zi >= 0) & (zi < shape[2])
                    )
                    vals = channel[
                        np.clip(xi, 0, shape[0] - 1),
                        np.clip(yi, 0, shape[1] - 1),
                        np.clip(zi, 0, shape[2] - 1),
                    ].astype(np.float64)
                    vals = np.where(ok, vals, float(pad_value))
                acc += w * vals
    return acc.reshape(out_shape)


def sample_image(
    image: Image,
    coords: np.ndarray,
    target_affine: np.ndarray,
    interpolation: str = LINEAR,
    boundary: str = "constant",
    pad_value: float = 0.0,
) -> Image:
    """Sample every channel of an image at the given source coordinates.

    Label images always use nearest neighbor and keep their integer dtype.
    """
    if image.kind is ImageKind.LABEL:
        interpolation = NEAREST
        pad_value = max(0, int(round(pad_value)))  # uint16: no negative wrap
    chans = [
        sample_channel(c, coords, interpolation, boundary, pad_value)
        for c in image.data
    ]
    data = np.stack(chans).astype(image.astype_kind())
    return image.with_data(data, affine=np.array(target_affine, dtype=np.float64))


def grid_for_spacing(affine, shape, new_spacing) -> tuple[np.ndarray, tuple]:
    """Target grid with the same orientation whose FOV covers the source FOV.

    new_shape = ceil(extent_mm / new_spacing) per axis; the origin shifts by
    half the spacing difference so voxel-center coverage is preserved.
    """
    new_spacing = np.asarray(new_spacing, dtype=np.float64)
    if np.any(new_spacing <= 0):
        raise NonPositiveSpacing(f"target spacing must be positive, got {new_spacing}")
    sp = affine_spacing(affine)
    dirs = affine[:3, :3] / sp
    extent = np.asarray(shape, dtype=np.float64) * sp
    new_shape = tuple(int(n) for n in np.ceil(extent / new_spacing - 1e-9))
    new_affine = np.eye(4)
    new_affine[:3, :3] = dirs * new_spacing
    new_affine[:3, 3] = affine[:3, 3] + dirs @ ((new_spacing - sp) / 2.0)
    return new_affine, new_shape
