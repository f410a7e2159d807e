"""Intensity transforms: normalization and intensity augmentation.

These never move voxels and never touch label maps: only scalar images are
modified, each with its own statistics. Optional masks (a named label image,
or an intensity threshold) restrict the voxels used to compute statistics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from ..errors import (
    BadPipeline,
    DegenerateHistogram,
    EmptyMask,
    MissingLabelRange,
    NoValidPlacement,
    ZeroVariance,
)
from ..image import Image, ImageKind
from ..pipeline import Param, TransformDef, register
from ..rng import Rng

DEFAULT_PERCENTILES = [1.0] + [10.0 * k for k in range(1, 10)] + [99.0]

_MASK_PARAMS = [Param("mask_image", "str"), Param("mask_threshold", "float")]


def _resolve_mask(subject, img, mask_image, mask_threshold) -> np.ndarray:
    """Boolean (X, Y, Z) mask of voxels used for statistics."""
    if mask_image is not None:
        if subject is None or mask_image not in subject:
            raise BadPipeline(f"no image named {mask_image!r} to use as a mask")
        ref = subject[mask_image]
        if ref.spatial_shape != img.spatial_shape:
            raise BadPipeline(
                f"mask {mask_image!r} shape {ref.spatial_shape} != image {img.spatial_shape}"
            )
        mask = np.any(ref.data != 0, axis=0)
    elif mask_threshold is not None:
        mask = np.any(img.data > mask_threshold, axis=0)
    else:
        mask = np.ones(img.spatial_shape, dtype=bool)
    if not mask.any():
        raise EmptyMask("mask selects no voxels")
    return mask


def _masked_values(img, mask) -> np.ndarray:
    return img.data[:, mask].astype(np.float64).ravel()


def _scalar_map(subject, fn) -> dict:
    """Apply fn to scalar images only; labels pass through bit-identically."""
    return {
        name: fn(img) if img.kind is ImageKind.SCALAR else img
        for name, img in subject.images.items()
    }


# --------------------------------------------------------------------------
# RescaleIntensity
# --------------------------------------------------------------------------


def _rescale_apply(subject, params):
    a, b = params["out_range"]
    if not a < b:
        raise BadPipeline(f"out_range must satisfy a < b, got ({a}, {b})")
    pl, pu = params["percentiles"]
    if not (0 <= pl < pu <= 100):
        raise BadPipeline(f"percentiles must satisfy 0 <= low < high <= 100, got ({pl}, {pu})")
    in_range = params["in_range"]

    def one(img):
        data = img.data.astype(np.float64)
        if in_range is not None:
            data = np.clip(data, in_range[0], in_range[1])
        mask = _resolve_mask(subject, img, params["mask_image"], params["mask_threshold"])
        vals = data[:, mask].ravel()
        q_low, q_high = np.percentile(vals, [pl, pu])
        if q_high == q_low:
            out = np.full_like(data, a)
        else:
            t = np.clip((data - q_low) / (q_high - q_low), 0.0, 1.0)
            out = np.clip(t * (b - a) + a, a, b)
        return img.with_data(out.astype(np.float32))

    return _scalar_map(subject, one), dict(params)


register(
    TransformDef(
        name="RescaleIntensity",
        category="intensity",
        params=[
            Param("out_range", "float_pair", default=(0.0, 1.0)),
            Param("percentiles", "float_pair", default=(0.0, 100.0), min=0.0, max=100.0),
            Param("in_range", "float_pair"),
            *_MASK_PARAMS,
        ],
        apply=_rescale_apply,
    )
)


# --------------------------------------------------------------------------
# ZNormalization
# --------------------------------------------------------------------------


def _znorm_apply(subject, params):
    stats = dict(params["stats"] or {})

    def one(name, img):
        if name in stats:
            mean, std = float(stats[name][0]), float(stats[name][1])
        else:
            mask = _resolve_mask(subject, img, params["mask_image"], params["mask_threshold"])
            vals = _masked_values(img, mask)
            mean = float(vals.mean())
            std = float(vals.std())  # population standard deviation
            if std == 0.0:
                raise ZeroVariance("masked intensities have zero variance")
            stats[name] = [mean, std]
        out = (img.data.astype(np.float64) - mean) / std
        return img.with_data(out.astype(np.float32))

    images = {
        name: one(name, img) if img.kind is ImageKind.SCALAR else img
        for name, img in subject.images.items()
    }
    recorded = dict(params)
    recorded["stats"] = stats
    return images, recorded


register(
    TransformDef(
        name="ZNormalization",
        category="intensity",
        params=[Param("stats", "dict"), *_MASK_PARAMS],
        apply=_znorm_apply,
    )
)


# --------------------------------------------------------------------------
# Histogram standardization (trained piecewise-linear landmark mapping)
# --------------------------------------------------------------------------


@dataclass
class LandmarkTable:
    """Percentile landmarks mapped to a trained standard scale [0, 100]."""

    percentiles: list
    standard_values: list

    def __post_init__(self):
        p = np.asarray(self.percentiles, dtype=np.float64)
        s = np.asarray(self.standard_values, dtype=np.float64)
        if len(p) != len(s) or len(p) < 3:
            raise ValueError("landmark table needs matching lists of length >= 3")
        if np.any(np.diff(p) <= 0) or np.any(np.diff(s) <= 0):
            raise ValueError("landmark percentiles and values must be strictly increasing")
        if p[0] <= 0 or p[-1] >= 100:
            raise ValueError("percentiles must lie strictly inside (0, 100)")

    def to_json(self) -> dict:
        return {
            "percentiles": [float(v) for v in self.percentiles],
            "standard_values": [float(v) for v in self.standard_values],
        }

    @classmethod
    def from_json(cls, obj) -> "LandmarkTable":
        return cls(list(obj["percentiles"]), list(obj["standard_values"]))

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=1)

    @classmethod
    def load(cls, path) -> "LandmarkTable":
        with open(path) as f:
            return cls.from_json(json.load(f))


def _image_landmarks(values: np.ndarray, percentiles) -> np.ndarray:
    marks = np.percentile(values, percentiles)
    if marks[-1] <= marks[0]:
        raise DegenerateHistogram("low and high anchor percentiles coincide")
    return marks


def histogram_train(images, percentiles=None, masks=None) -> LandmarkTable:
    """Train a landmark table from scalar images or raw arrays.

    Each image's landmarks are affinely mapped so its (first, last) percentile
    anchors land on (0, 100); the standard values are the per-percentile mean
    of those rescaled landmarks across the training set.
    """
    percentiles = list(percentiles if percentiles is not None else DEFAULT_PERCENTILES)
    if not images:
        raise ValueError("histogram_train needs at least one image")
    rescaled = []
    for i, img in enumerate(images):
        arr = img.data if isinstance(img, Image) else np.asarray(img)
        vals = arr.astype(np.float64).ravel()
        if masks is not None and masks[i] is not None:
            m = np.asarray(masks[i], dtype=bool)
            vals = arr.astype(np.float64)[:, m].ravel() if isinstance(img, Image) else vals[m.ravel()]
            if vals.size == 0:
                raise EmptyMask("mask selects no voxels")
        marks = _image_landmarks(vals, percentiles)
        rescaled.append((marks - marks[0]) / (marks[-1] - marks[0]) * 100.0)
    standard = np.mean(np.stack(rescaled), axis=0)
    return LandmarkTable(percentiles, standard.tolist())


def _piecewise_map(values, xs, ys):
    """Monotone piecewise-linear map with linear extrapolation beyond the ends."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    # collapse duplicate landmark intensities, averaging their targets
    if np.any(np.diff(xs) <= 0):
        ux, inverse = np.unique(xs, return_inverse=True)
        uy = np.zeros_like(ux)
        counts = np.zeros_like(ux)
        np.add.at(uy, inverse, ys)
        np.add.at(counts, inverse, 1.0)
        xs, ys = ux, uy / counts
    out = np.interp(values, xs, ys)
    lo_slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
    hi_slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    below = values < xs[0]
    above = values > xs[-1]
    out[below] = ys[0] + (values[below] - xs[0]) * lo_slope
    out[above] = ys[-1] + (values[above] - xs[-1]) * hi_slope
    return out


def _hist_apply(subject, params):
    if params["landmarks_path"] is not None:
        table = LandmarkTable.load(params["landmarks_path"])
    elif params["percentiles"] is not None and params["standard_values"] is not None:
        table = LandmarkTable(params["percentiles"], params["standard_values"])
    else:
        raise BadPipeline(
            "HistogramStandardization needs percentiles+standard_values or landmarks_path"
        )

    def one(img):
        mask = _resolve_mask(subject, img, params["mask_image"], params["mask_threshold"])
        vals = _masked_values(img, mask)
        marks = _image_landmarks(vals, table.percentiles)
        out = _piecewise_map(img.data.astype(np.float64), marks, table.standard_values)
        return img.with_data(out.astype(np.float32))

    recorded = dict(params)
    recorded["percentiles"] = [float(v) for v in table.percentiles]
    recorded["standard_values"] = [float(v) for v in table.standard_values]
    recorded["landmarks_path"] = None
    return _scalar_map(subject, one), recorded


register(
    TransformDef(
        name="HistogramStandardization",
        category="intensity",
        params=[
            Param("percentiles", "array"),
            Param("standard_values", "array"),
            Param("landmarks_path", "str"),
            *_MASK_PARAMS,
        ],
        apply=_hist_apply,
    )
)


# --------------------------------------------------------------------------
# Noise
# --------------------------------------------------------------------------


def _noise_apply(subject, params):
    child = Rng(params["seed"])
    mean, std = params["mean"], params["std"]

    def one(img):
        noise = child.normal_block(img.data.size, mean, std).reshape(img.data.shape)
        return img.with_data((img.data.astype(np.float64) + noise).astype(np.float32))

    return _scalar_map(subject, one), dict(params)


register(
    TransformDef(
        name="Noise",
        category="intensity",
        ui=False,
        params=[
            Param("mean", "float", default=0.0),
            Param("std", "float", default=0.0, min=0.0),
            Param("seed", "int", default=0),
        ],
        apply=_noise_apply,
    )
)


def _random_noise_draw(params, subject, rng):
    mean = rng.uniform(*params["mean"])
    std = rng.uniform(*params["std"])
    return "Noise", {"mean": mean, "std": std, "seed": rng.derive_seed()}


register(
    TransformDef(
        name="RandomNoise",
        category="intensity",
        params=[
            Param("mean", "float_pair", default=(0.0, 0.0)),
            Param("std", "float_pair", default=(0.0, 0.25), min=0.0),
        ],
        apply=lambda subject, params: (_ for _ in ()).throw(
            BadPipeline("RandomNoise resolves to Noise")
        ),
        draw=_random_noise_draw,
    )
)


# --------------------------------------------------------------------------
# Blur
# --------------------------------------------------------------------------


def gaussian_kernel(sigma_voxels: float) -> np.ndarray:
    """1D Gaussian taps truncated at 4 sigma and renormalized to sum 1."""
    if sigma_voxels <= 0:
        return np.ones(1)
    radius = int(np.ceil(4.0 * sigma_voxels - 1e-9))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma_voxels) ** 2)
    return k / k.sum()


def _blur_apply(subject, params):
    stds_mm = params["stds"]

    def one(img):
        sigmas_vox = np.asarray(stds_mm, dtype=np.float64) / img.spacing
        data = img.data.astype(np.float64)
        for axis in range(3):
            kernel = gaussian_kernel(float(sigmas_vox[axis]))
            if len(kernel) > 1:
                data = convolve1d(data, kernel, axis=axis + 1, mode="nearest")
        return img.with_data(data.astype(np.float32))

    return _scalar_map(subject, one), dict(params)


register(
    TransformDef(
        name="Blur",
        category="intensity",
        ui=False,
        params=[Param("stds", "float_triple", default=(1.0, 1.0, 1.0), min=0.0)],
        apply=_blur_apply,
    )
)


def _random_blur_draw(params, subject, rng):
    stds = [rng.uniform(*params["std"]) for _ in range(3)]
    return "Blur", {"stds": stds}


register(
    TransformDef(
        name="RandomBlur",
        category="intensity",
        params=[Param("std", "float_pair", default=(0.0, 2.0), min=0.0)],
        apply=lambda subject, params: (_ for _ in ()).throw(
            BadPipeline("RandomBlur resolves to Blur")
        ),
        draw=_random_blur_draw,
    )
)


# --------------------------------------------------------------------------
# Gamma
# --------------------------------------------------------------------------


def _gamma_apply(subject, params):
    gamma = params["gamma"]

    def one(img):
        data = img.data.astype(np.float64)
        mn, mx = float(data.min()), float(data.max())
        if mx == mn:
            return img
        t = (data - mn) / (mx - mn)
        out = np.power(t, gamma) * (mx - mn) + mn
        return img.with_data(out.astype(np.float32))

    return _scalar_map(subject, one), dict(params)


register(
    TransformDef(
        name="Gamma",
        category="intensity",
        ui=False,
        params=[Param("gamma", "float", default=1.0, min=1e-6)],
        apply=_gamma_apply,
    )
)


def _random_gamma_draw(params, subject, rng):
    return "Gamma", {"gamma": float(np.exp(rng.uniform(*params["log_gamma"])))}


register(
    TransformDef(
        name="RandomGamma",
        category="intensity",
        params=[Param("log_gamma", "float_pair", default=(-0.3, 0.3))],
        apply=lambda subject, params: (_ for _ in ()).throw(
            BadPipeline("RandomGamma resolves to Gamma")
        ),
        draw=_random_gamma_draw,
    )
)


# --------------------------------------------------------------------------
# Swap (context restoration / self-supervision style patch shuffling)
# --------------------------------------------------------------------------


def _swap_feasible(shape, patch) -> bool:
    fits = all(patch[a] <= shape[a] for a in range(3))
    return fits and any(shape[a] >= 2 * patch[a] for a in range(3))


def _swap_apply(subject, params):
    patch = params["patch_size"]
    swaps = [
        ([int(v) for v in pair[0]], [int(v) for v in pair[1]])
        for pair in (params["swaps"] or [])
    ]

    def one(img):
        if swaps and not _swap_feasible(img.spatial_shape, patch):
            raise NoValidPlacement(
                f"volume {img.spatial_shape} cannot host two disjoint {patch} patches"
            )
        data = img.data.copy()
        for o1, o2 in swaps:
            s1 = (slice(None),) + tuple(slice(o1[a], o1[a] + patch[a]) for a in range(3))
            s2 = (slice(None),) + tuple(slice(o2[a], o2[a] + patch[a]) for a in range(3))
            tmp = data[s1].copy()
            data[s1] = data[s2]
            data[s2] = tmp
        return img.with_data(data)

    return _scalar_map(subject, one), dict(params)


register(
    TransformDef(
        name="Swap",
        category="intensity",
        ui=False,
        params=[
            Param("patch_size", "int_triple", default=(15, 15, 15), min=1),
            Param("swaps", "array"),
        ],
        apply=_swap_apply,
    )
)


def _random_swap_draw(params, subject, rng):
    patch = params["patch_size"]
    shape = subject.spatial_shape
    if not _swap_feasible(shape, patch):
        raise NoValidPlacement(
            f"volume {shape} cannot host two disjoint {patch} patches"
        )
    swaps = []
    for _ in range(params["num_iterations"]):
        # redraw the pair jointly: uniform over valid (disjoint) pairs
        for _attempt in range(100000):
            o1 = [rng.int_in(0, shape[a] - patch[a]) for a in range(3)]
            o2 = [rng.int_in(0, shape[a] - patch[a]) for a in range(3)]
            if any(abs(o1[a] - o2[a]) >= patch[a] for a in range(3)):
                break
        else:
            raise NoValidPlacement("could not draw disjoint patches")
        swaps.append([o1, o2])
    return "Swap", {"patch_size": patch, "swaps": swaps or None}


register(
    TransformDef(
        name="RandomSwap",
        category="intensity",
        params=[
            Param("patch_size", "int_triple", default=(15, 15, 15), min=1),
            Param("num_iterations", "int", default=100, min=0),
        ],
        apply=lambda subject, params: (_ for _ in ()).throw(
            BadPipeline("RandomSwap resolves to Swap")
        ),
        draw=_random_swap_draw,
    )
)


# --------------------------------------------------------------------------
# LabelsToImage (synthesize a scalar image from a segmentation)
# --------------------------------------------------------------------------


def _labels_to_image_apply(subject, params):
    name = params["label_image"]
    if name not in subject:
        raise BadPipeline(f"no image named {name!r} in subject")
    label_img = subject[name]
    if label_img.kind is not ImageKind.LABEL:
        raise BadPipeline(f"image {name!r} is not a label map")
    labels = label_img.data[0]
    present = np.unique(labels)
    means, stds = params["means"], params["stds"]
    for value in present:
        if str(int(value)) not in means or str(int(value)) not in stds:
            raise MissingLabelRange(f"label {int(value)} has no configured intensity range")
    child = Rng(params["seed"])
    z = child.normal_block(labels.size).reshape(labels.shape)
    out = np.zeros(labels.shape, dtype=np.float64)
    for value in present:
        key = str(int(value))
        region = labels == value
        out[region] = float(means[key]) + float(stds[key]) * z[region]
    new_img = Image(
        data=out[np.newaxis].astype(np.float32),
        affine=label_img.affine,
        kind=ImageKind.SCALAR,
    )
    images = dict(subject.images)
    images[params["output_image"]] = new_img
    return images, dict(params)


register(
    TransformDef(
        name="LabelsToImage",
        category="intensity",
        ui=False,
        params=[
            Param("label_image", "str", default="label"),
            Param("means", "dict", required=True),
            Param("stds", "dict", required=True),
            Param("seed", "int", default=0),
            Param("output_image", "str", default="image_from_labels"),
        ],
        apply=_labels_to_image_apply,
    )
)


def _random_labels_to_image_draw(params, subject, rng):
    name = params["label_image"]
    if name not in subject:
        raise BadPipeline(f"no image named {name!r} in subject")
    label_img = subject[name]
    present = [int(v) for v in np.unique(label_img.data)]
    mean_ranges, std_ranges = params["mean_ranges"], params["std_ranges"]
    means, stds = {}, {}
    for value in present:
        key = str(value)
        if key not in mean_ranges or key not in std_ranges:
            raise MissingLabelRange(f"label {value} has no configured intensity range")
        means[key] = rng.uniform(*[float(v) for v in mean_ranges[key]])
        stds[key] = rng.uniform(*[float(v) for v in std_ranges[key]])
        if stds[key] < 0:
            raise BadPipeline(f"std range for label {value} must be non-negative")
    return "LabelsToImage", {
        "label_image": name,
        "means": means,
        "stds": stds,
        "seed": rng.derive_seed(),
        "output_image": params["output_image"],
    }


register(
    TransformDef(
        name="RandomLabelsToImage",
        category="intensity",
        ui=False,
        params=[
            Param("label_image", "str", default="label"),
            Param("mean_ranges", "dict", required=True),
            Param("std_ranges", "dict", required=True),
            Param("output_image", "str", default="image_from_labels"),
        ],
        apply=lambda subject, params: (_ for _ in ()).throw(
            BadPipeline("RandomLabelsToImage resolves to LabelsToImage")
        ),
        draw=_random_labels_to_image_draw,
    )
)
