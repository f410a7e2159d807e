"""Spatial transforms: reorientation, resampling, crop/pad, flip, affine,
elastic deformation, anisotropy simulation.

Spatial transforms move voxels, so they are applied to every image of a
subject; label maps are always resampled with nearest neighbor. Crop, pad,
flip and reorientation update the affine so every surviving voxel keeps its
physical position.
"""

from __future__ import annotations

import numpy as np

from ..errors import (
    BadPipeline,
    DegenerateScale,
    EmptyResult,
    ExcessiveDisplacement,
)
from ..geometry import assign_axes
from ..image import ImageKind, Subject
from ..pipeline import Param, TransformDef, register
from ..resample import (
    LINEAR,
    NEAREST,
    grid_for_spacing,
    sample_image,
    source_coords,
)

_INTERP = Param("interpolation", "enum", default="linear", choices=("linear", "nearest"))
_PAD_VALUE = Param("pad_value", "float", default=0.0)


def _first_image(subject: Subject):
    return subject.images[subject.image_names[0]]


def _map_all(subject, fn) -> dict:
    return {name: fn(img) for name, img in subject.images.items()}


# --------------------------------------------------------------------------
# Reorient / ToCanonical
# --------------------------------------------------------------------------


def _reorient_image(img, perm, flips):
    data = img.data.transpose((0,) + tuple(a + 1 for a in perm))
    if flips:
        data = np.flip(data, axis=tuple(a + 1 for a in flips))
    data = np.ascontiguousarray(data)
    new_shape = data.shape[1:]
    # old_index = P . new_index keeps index_to_physical invariant
    p = np.zeros((4, 4))
    p[3, 3] = 1.0
    for i in range(3):
        j = perm[i]
        if i in flips:
            p[j, i] = -1.0
            p[j, 3] = new_shape[i] - 1
        else:
            p[j, i] = 1.0
    return img.with_data(data, affine=img.affine @ p)


def _reorient_apply(subject, params):
    perm = [int(v) for v in params["permutation"]]
    flips = [int(v) for v in params["flips"]]
    if sorted(perm) != [0, 1, 2]:
        raise BadPipeline(f"permutation must rearrange (0,1,2), got {perm}")
    images = _map_all(subject, lambda img: _reorient_image(img, perm, flips))
    return images, {"permutation": perm, "flips": flips}


def _reorient_invert(params):
    perm = list(params["permutation"])
    flips = set(params["flips"])
    inv_perm = [perm.index(i) for i in range(3)]
    inv_flips = [i for i in range(3) if inv_perm[i] in flips]
    return "Reorient", {"permutation": inv_perm, "flips": inv_flips}


register(
    TransformDef(
        name="Reorient",
        category="spatial",
        requires_consistent=False,
        ui=False,
        params=[
            Param("permutation", "array", required=True),
            Param("flips", "axes_empty_ok", default=[]),
        ],
        apply=_reorient_apply,
        invertible=True,
        invert=_reorient_invert,
    )
)


def _to_canonical_apply(subject, params):
    if params["permutation"] is not None:
        return _reorient_apply(subject, params)
    assignment, signs = assign_axes(_first_image(subject).affine)
    perm = [assignment.index(r) for r in range(3)]
    flips = [r for r in range(3) if signs[perm[r]] < 0]
    images = _map_all(subject, lambda img: _reorient_image(img, perm, flips))
    return images, {"permutation": perm, "flips": flips}


register(
    TransformDef(
        name="ToCanonical",
        category="spatial",
        requires_consistent=False,
        params=[
            Param("permutation", "array"),
            Param("flips", "axes_empty_ok", default=[]),
        ],
        apply=_to_canonical_apply,
        invertible=True,
        invert=_reorient_invert,
    )
)


# --------------------------------------------------------------------------
# Resample
# --------------------------------------------------------------------------


def _resample_apply(subject, params):
    ref = _first_image(subject)
    if params["target_affine"] is not None:
        if params["target_shape"] is None:
            raise BadPipeline("Resample: target_affine requires target_shape")
        target_affine = np.asarray(params["target_affine"], dtype=np.float64).reshape(4, 4)
        target_shape = tuple(params["target_shape"])
    elif params["affine"] is not None:
        if params["shape"] is None:
            raise BadPipeline("Resample: explicit affine requires shape")
        target_affine = np.asarray(params["affine"], dtype=np.float64).reshape(4, 4)
        target_shape = tuple(params["shape"])
    elif params["reference"] is not None:
        name = params["reference"]
        if name not in subject:
            raise BadPipeline(f"Resample: no image named {name!r} in subject")
        ref_img = subject[name]
        target_affine = np.array(ref_img.affine)
        target_shape = ref_img.spatial_shape
    elif params["spacing"] is not None:
        target_affine, target_shape = grid_for_spacing(
            ref.affine, ref.spatial_shape, params["spacing"]
        )
    else:
        raise BadPipeline("Resample needs one of: spacing, reference, affine+shape")

    interp = params["interpolation"]
    pad = params["pad_value"]

    def onto_target(img):
        coords = source_coords(target_affine, target_shape, img.affine)
        return sample_image(img, coords, target_affine, interp, "constant", pad)

    images = _map_all(subject, onto_target)
    recorded = {
        "target_affine": target_affine.tolist(),
        "target_shape": [int(v) for v in target_shape],
        "interpolation": interp,
        "pad_value": pad,
        "source_affine": ref.affine.tolist(),
        "source_shape": [int(v) for v in ref.spatial_shape],
    }
    return images, recorded


def _resample_invert(params):
    return "Resample", {
        "target_affine": params["source_affine"],
        "target_shape": params["source_shape"],
        "interpolation": params["interpolation"],
        "pad_value": params["pad_value"],
        "source_affine": params["target_affine"],
        "source_shape": params["target_shape"],
    }


register(
    TransformDef(
        name="Resample",
        category="spatial",
        requires_consistent=False,
        params=[
            Param("spacing", "float_triple", min=1e-9),
            Param("reference", "str"),
            Param("affine", "array"),
            Param("shape", "int_triple", min=1),
            Param("target_affine", "array"),
            Param("target_shape", "int_triple", min=1),
            _INTERP,
            _PAD_VALUE,
            Param("source_affine", "array"),
            Param("source_shape", "int_triple", min=1),
        ],
        apply=_resample_apply,
        invertible=True,
        invert=_resample_invert,
    )
)


# --------------------------------------------------------------------------
# Crop / Pad / CropOrPad
# --------------------------------------------------------------------------


def _translate_affine(affine, index_offset):
    out = np.array(affine)
    out[:3, 3] = affine[:3, :3] @ np.asarray(index_offset, dtype=np.float64) + affine[:3, 3]
    return out


def _crop_images(subject, low, high):
    shape = subject.spatial_shape
    new_shape = tuple(shape[a] - low[a] - high[a] for a in range(3))
    if any(s < 1 for s in new_shape):
        raise EmptyResult(f"crop {low}/{high} of {shape} leaves no voxels")
    sl = tuple(slice(low[a], shape[a] - high[a]) for a in range(3))

    def crop_one(img):
        data = np.ascontiguousarray(img.data[(slice(None),) + sl])
        return img.with_data(data, affine=_translate_affine(img.affine, low))

    return _map_all(subject, crop_one)


def _crop_apply(subject, params):
    low, high = params["low"], params["high"]
    return _crop_images(subject, low, high), {"low": list(low), "high": list(high)}


register(
    TransformDef(
        name="Crop",
        category="spatial",
        params=[
            Param("low", "int_triple", default=(0, 0, 0), min=0),
            Param("high", "int_triple", default=(0, 0, 0), min=0),
        ],
        apply=_crop_apply,
        invertible=True,
        invert=lambda p: ("Pad", {"low": p["low"], "high": p["high"], "mode": "constant", "value": 0.0}),
    )
)


def _pad_images(subject, low, high, mode, value):
    widths = ((0, 0),) + tuple((low[a], high[a]) for a in range(3))

    def pad_one(img):
        if mode == "edge":
            data = np.pad(img.data, widths, mode="edge")
        else:
            fill = value
            if img.kind is ImageKind.LABEL:
                fill = max(0, int(round(value)))
            data = np.pad(img.data, widths, mode="constant", constant_values=fill)
        return img.with_data(data, affine=_translate_affine(img.affine, [-v for v in low]))

    return _map_all(subject, pad_one)


def _pad_apply(subject, params):
    low, high = params["low"], params["high"]
    images = _pad_images(subject, low, high, params["mode"], params["value"])
    recorded = {
        "low": list(low),
        "high": list(high),
        "mode": params["mode"],
        "value": params["value"],
    }
    return images, recorded


register(
    TransformDef(
        name="Pad",
        category="spatial",
        params=[
            Param("low", "int_triple", default=(0, 0, 0), min=0),
            Param("high", "int_triple", default=(0, 0, 0), min=0),
            Param("mode", "enum", default="constant", choices=("constant", "edge")),
            Param("value", "float", default=0.0),
        ],
        apply=_pad_apply,
        invertible=True,
        invert=lambda p: ("Crop", {"low": p["low"], "high": p["high"]}),
    )
)


def _crop_or_pad_apply(subject, params):
    shape = subject.spatial_shape
    if params["crop_low"] is not None:
        crop_low = list(params["crop_low"])
        crop_high = list(params["crop_high"] or (0, 0, 0))
        pad_low = list(params["pad_low"] or (0, 0, 0))
        pad_high = list(params["pad_high"] or (0, 0, 0))
    else:
        if params["shape"] is None:
            raise BadPipeline("CropOrPad needs a target shape or explicit crop/pad vectors")
        target = params["shape"]
        crop_low, crop_high, pad_low, pad_high = [0, 0, 0], [0, 0, 0], [0, 0, 0], [0, 0, 0]
        for a in range(3):
            diff = target[a] - shape[a]
            if diff > 0:
                # odd difference puts the extra voxel at the high end
                pad_low[a] = diff // 2
                pad_high[a] = diff - diff // 2
            elif diff < 0:
                crop_low[a] = -diff // 2
                crop_high[a] = -diff - (-diff // 2)
    images = subject.images
    if any(crop_low) or any(crop_high):
        images = _crop_images(subject, crop_low, crop_high)
    if any(pad_low) or any(pad_high):
        tmp = Subject(images, metadata=subject.metadata, history=subject.history)
        images = _pad_images(tmp, pad_low, pad_high, "constant", 0.0)
    recorded = {
        "shape": list(params["shape"]) if params["shape"] is not None else None,
        "crop_low": crop_low,
        "crop_high": crop_high,
        "pad_low": pad_low,
        "pad_high": pad_high,
        "source_shape": list(shape),
    }
    return images, recorded


def _crop_or_pad_invert(params):
    return "CropOrPad", {
        "shape": params.get("source_shape"),
        "crop_low": params["pad_low"],
        "crop_high": params["pad_high"],
        "pad_low": params["crop_low"],
        "pad_high": params["crop_high"],
    }


register(
    TransformDef(
        name="CropOrPad",
        category="spatial",
        params=[
            Param("shape", "int_triple", min=1),
            Param("crop_low", "int_triple", min=0),
            Param("crop_high", "int_triple", min=0),
            Param("pad_low", "int_triple", min=0),
            Param("pad_high", "int_triple", min=0),
            Param("source_shape", "int_triple", min=1),
        ],
        apply=_crop_or_pad_apply,
        invertible=True,
        invert=_crop_or_pad_invert,
    )
)


# --------------------------------------------------------------------------
# Flip
# --------------------------------------------------------------------------


def _flip_apply(subject, params):
    axes = params["axes"]

    def flip_one(img):
        if not axes:
            return img
        data = np.ascontiguousarray(np.flip(img.data, axis=tuple(a + 1 for a in axes)))
        p = np.eye(4)
        for a in axes:
            p[a, a] = -1.0
            p[a, 3] = img.spatial_shape[a] - 1
        return img.with_data(data, affine=img.affine @ p)

    return _map_all(subject, flip_one), {"axes": list(axes)}


register(
    TransformDef(
        name="Flip",
        category="spatial",
        params=[Param("axes", "axes_empty_ok", default=[0])],
        apply=_flip_apply,
        invertible=True,
        invert=lambda p: ("Flip", {"axes": p["axes"]}),
    )
)


def _random_flip_draw(params, subject, rng):
    realized = [a for a in params["axes"] if rng.uniform() < params["p"]]
    return "Flip", {"axes": realized}


register(
    TransformDef(
        name="RandomFlip",
        category="spatial",
        params=[
            Param("axes", "axes", default=[0]),
            Param("p", "float", default=0.5, min=0.0, max=1.0),
        ],
        apply=lambda subject, params: (_ for _ in ()).throw(
            BadPipeline("RandomFlip resolves to Flip")
        ),
        draw=_random_flip_draw,
    )
)


# --------------------------------------------------------------------------
# Affine
# --------------------------------------------------------------------------


def _rotation_zyx(degrees) -> np.ndarray:
    rx, ry, rz = np.deg2rad(np.asarray(degrees, dtype=np.float64))
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return mz @ my @ mx


def physical_center(affine, shape) -> np.ndarray:
    half = (np.asarray(shape, dtype=np.float64) - 1.0) / 2.0
    return affine[:3, :3] @ half + affine[:3, 3]


def affine_matrix(scales, degrees, translation, center) -> np.ndarray:
    """Physical-space map: scale, then rotate (z.y.x intrinsic), then translate,
    all about the given center point."""
    lin = _rotation_zyx(degrees) @ np.diag(np.asarray(scales, dtype=np.float64))
    m = np.eye(4)
    m[:3, :3] = lin
    m[:3, 3] = np.asarray(center) + np.asarray(translation) - lin @ np.asarray(center)
    return m


def _affine_apply(subject, params):
    m = np.asarray(params["matrix"], dtype=np.float64).reshape(4, 4)
    interp = params["interpolation"]
    pad = params["pad_value"]
    minv = np.linalg.inv(m)

    def one(img):
        coords = source_coords(minv @ img.affine, img.spatial_shape, img.affine)
        return sample_image(img, coords, img.affine, interp, "constant", pad)

    images = _map_all(subject, one)
    recorded = {
        "matrix": m.tolist(),
        "interpolation": interp,
        "pad_value": pad,
        "scales": params["scales"],
        "degrees": params["degrees"],
        "translation": params["translation"],
    }
    return images, recorded


def _affine_invert(params):
    m = np.asarray(params["matrix"], dtype=np.float64).reshape(4, 4)
    return "Affine", {
        "matrix": np.linalg.inv(m).tolist(),
        "interpolation": params["interpolation"],
        "pad_value": params["pad_value"],
    }


register(
    TransformDef(
        name="Affine",
        category="spatial",
        ui=False,
        params=[
            Param("matrix", "array", required=True),
            _INTERP,
            _PAD_VALUE,
            Param("scales", "array"),
            Param("degrees", "array"),
            Param("translation", "array"),
        ],
        apply=_affine_apply,
        invertible=True,
        invert=_affine_invert,
    )
)


def _random_affine_draw(params, subject, rng):
    scales = [rng.uniform(*params["scales"]) for _ in range(3)]
    if any(s <= 0 for s in scales):
        raise DegenerateScale(f"drawn scale must be positive, got {scales}")
    degrees = [rng.uniform(*params["degrees"]) for _ in range(3)]
    translation = [rng.uniform(*params["translation"]) for _ in range(3)]
    img = _first_image(subject)
    center = physical_center(img.affine, img.spatial_shape)
    m = affine_matrix(scales, degrees, translation, center)
    return "Affine", {
        "matrix": m.tolist(),
        "interpolation": params["interpolation"],
        "pad_value": params["pad_value"],
        "scales": scales,
        "degrees": degrees,
        "translation": translation,
    }


register(
    TransformDef(
        name="RandomAffine",
        category="spatial",
        params=[
            Param("scales", "float_pair", default=(0.9, 1.1)),
            Param("degrees", "float_pair", default=(-10.0, 10.0)),
            Param("translation", "float_pair", default=(0.0, 0.0)),
            _INTERP,
            _PAD_VALUE,
        ],
        apply=lambda subject, params: (_ for _ in ()).throw(
            BadPipeline("RandomAffine resolves to Affine")
        ),
        draw=_random_affine_draw,
    )
)


# --------------------------------------------------------------------------
# Elastic deformation (cubic B-spline free-form deformation)
# --------------------------------------------------------------------------


def _bspline3(t: np.ndarray) -> np.ndarray:
    at = np.abs(t)
    out = np.zeros_like(at)
    inner = at <= 1.0
    outer = (at > 1.0) & (at < 2.0)
    out[inner] = (4.0 - 6.0 * at[inner] ** 2 + 3.0 * at[inner] ** 3) / 6.0
    out[outer] = (2.0 - at[outer]) ** 3 / 6.0
    return out


def _bspline_weights(extent: int, num_points: int) -> np.ndarray:
    """(extent, num_points) weight matrix for control points spread over
    [0, extent-1] with spacing (extent-1)/(num_points-1)."""
    h = (extent - 1) / (num_points - 1) if extent > 1 else 1.0
    u = np.arange(extent, dtype=np.float64) / h
    return _bspline3(u[:, None] - np.arange(num_points, dtype=np.float64)[None, :])


def dense_displacement(control: np.ndarray, shape) -> np.ndarray:
    """Tensor-product cubic B-spline interpolation of a (3, nx, ny, nz)
    control grid to a dense (3, X, Y, Z) millimeter displacement field."""
    _, nx, ny, nz = control.shape
    wx = _bspline_weights(shape[0], nx)
    wy = _bspline_weights(shape[1], ny)
    wz = _bspline_weights(shape[2], nz)
    return np.einsum("xi,yj,zk,cijk->cxyz", wx, wy, wz, control, optimize=True)


def _elastic_apply(subject, params):
    control = np.asarray(params["displacements"], dtype=np.float64)
    if control.ndim != 4 or control.shape[0] != 3 or any(s < 4 for s in control.shape[1:]):
        raise BadPipeline(
            f"displacements must be (3, nx, ny, nz) with nx,ny,nz >= 4, got {control.shape}"
        )
    shape = subject.spatial_shape
    ref = _first_image(subject)
    extent = np.asarray(shape) * ref.spacing
    for a in range(3):
        if shape[a] == 1:
            continue  # degenerate (2D) axes carry no in-plane extent
        max_disp = float(np.max(np.abs(control[a])))
        if max_disp > float(extent[a]) / 2.0:
            raise ExcessiveDisplacement(
                f"axis {a} displacement {max_disp:.3f} mm exceeds half the extent {extent[a]:.3f}"
            )
    field = dense_displacement(control, shape)
    interp = params["interpolation"]
    pad = params["pad_value"]

    def one(img):
        ainv = np.linalg.inv(img.affine)[:3, :3]
        coords = np.empty((3,) + tuple(shape), dtype=np.float64)
        gx = np.arange(shape[0], dtype=np.float64)[:, None, None]
        gy = np.arange(shape[1], dtype=np.float64)[None, :, None]
        gz = np.arange(shape[2], dtype=np.float64)[None, None, :]
        base = (gx, gy, gz)
        for r in range(3):
            coords[r] = base[r] + (
                ainv[r, 0] * field[0] + ainv[r, 1] * field[1] + ainv[r, 2] * field[2]
            )
        return sample_image(img, coords, img.affine, interp, "constant", pad)

    images = _map_all(subject, one)
    recorded = {
        "displacements": control.tolist(),
        "locked_borders": params["locked_borders"],
        "interpolation": interp,
        "pad_value": pad,
    }
    return images, recorded


register(
    TransformDef(
        name="ElasticDeformation",
        category="spatial",
        ui=False,
        params=[
            Param("displacements", "array", required=True),
            Param("locked_borders", "int", default=2, min=0, max=2),
            _INTERP,
            _PAD_VALUE,
        ],
        apply=_elastic_apply,
    )
)


def _random_elastic_draw(params, subject, rng):
    ncp = params["num_control_points"]
    if any(n < 4 for n in ncp):
        raise BadPipeline(f"num_control_points must be >= 4 per axis, got {ncp}")
    d = params["max_displacement"]
    img = _first_image(subject)
    shape = img.spatial_shape
    extent = np.asarray(shape) * img.spacing
    live_axes = [a for a in range(3) if shape[a] > 1]
    if live_axes and d > float(np.min(extent[live_axes])) / 2.0:
        raise ExcessiveDisplacement(
            f"max_displacement {d} mm exceeds half the image extent {extent}"
        )
    n = 3 * ncp[0] * ncp[1] * ncp[2]
    grid = rng.uniform_block(n, -d, d).reshape(3, *ncp)
    for a in range(3):
        if shape[a] == 1:
            grid[a] = 0.0  # no out-of-plane deformation for 2D inputs
    locked = params["locked_borders"]
    if locked:
        for a in range(1, 4):
            sl_lo = [slice(None)] * 4
            sl_hi = [slice(None)] * 4
            sl_lo[a] = slice(0, locked)
            sl_hi[a] = slice(grid.shape[a] - locked, grid.shape[a])
            grid[tuple(sl_lo)] = 0.0
            grid[tuple(sl_hi)] = 0.0
    return "ElasticDeformation", {
        "displacements": grid.tolist(),
        "locked_borders": locked,
        "interpolation": params["interpolation"],
        "pad_value": params["pad_value"],
    }


register(
    TransformDef(
        name="RandomElasticDeformation",
        category="spatial",
        params=[
            Param("num_control_points", "int_triple", default=(7, 7, 7), min=4),
            Param("max_displacement", "float", default=7.5, min=0.0),
            Param("locked_borders", "int", default=2, min=0, max=2),
            _INTERP,
            _PAD_VALUE,
        ],
        apply=lambda subject, params: (_ for _ in ()).throw(
            BadPipeline("RandomElasticDeformation resolves to ElasticDeformation")
        ),
        draw=_random_elastic_draw,
    )
)


# --------------------------------------------------------------------------
# Anisotropy (partial-volume simulation)
# --------------------------------------------------------------------------


def _anisotropy_apply(subject, params):
    axis = params["axis"]
    factor = params["downsampling"]
    if factor < 1.0:
        raise BadPipeline(f"downsampling factor must be >= 1, got {factor}")

    def one(img):
        sp = img.spacing
        new_spacing = np.array(sp)
        new_spacing[axis] = sp[axis] * factor
        down_affine, down_shape = grid_for_spacing(img.affine, img.spatial_shape, new_spacing)
        coords_down = source_coords(down_affine, down_shape, img.affine)
        down = sample_image(img, coords_down, down_affine, NEAREST, "edge", 0.0)
        coords_up = source_coords(img.affine, img.spatial_shape, down_affine)
        return sample_image(down, coords_up, img.affine, LINEAR, "edge", 0.0)

    images = _map_all(subject, one)
    return images, {"axis": axis, "downsampling": factor}


register(
    TransformDef(
        name="Anisotropy",
        category="spatial",
        ui=False,
        params=[
            Param("axis", "int", default=0, min=0, max=2),
            Param("downsampling", "float", default=2.0, min=1.0),
        ],
        apply=_anisotropy_apply,
    )
)


def _random_anisotropy_draw(params, subject, rng):
    axes = params["axes"]
    axis = axes[rng.int_in(0, len(axes) - 1)]
    factor = rng.uniform(*params["downsampling"])
    return "Anisotropy", {"axis": axis, "downsampling": factor}


register(
    TransformDef(
        name="RandomAnisotropy",
        category="spatial",
        params=[
            Param("axes", "axes", default=[0, 1, 2]),
            Param("downsampling", "float_pair", default=(1.5, 5.0), min=1.0),
        ],
        apply=lambda subject, params: (_ for _ in ()).throw(
            BadPipeline("RandomAnisotropy resolves to Anisotropy")
        ),
        draw=_random_anisotropy_draw,
    )
)
