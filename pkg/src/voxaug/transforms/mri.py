"""MRI-specific artifacts: k-space spike, ghosting, motion, and bias field.

k-space uses the centered convention: the DC component sits at the array
center (``fftshift``/``ifftshift`` around numpy's FFT). Artifact transforms
perturb the spectrum per channel and reconstruct the complex magnitude, so
outputs are everywhere >= 0. Labels are never touched (these are intensity
transforms).

Motion simulation resamples the volume under each drawn rigid transform with
edge replication (a translated constant image stays constant), partitions
k-space along one drawn axis into contiguous blocks proportional to the
sorted time intervals, and fills each block from the FFT of the volume in
flight at that time; the untransformed volume owns the earliest block.
"""

from __future__ import annotations

import numpy as np

from ..errors import BadPipeline
from ..image import ImageKind
from ..pipeline import Param, TransformDef, register
from ..resample import LINEAR, sample_image, source_coords
from .spatial import affine_matrix, physical_center


def fft3(volume: np.ndarray) -> np.ndarray:
    """Centered 3D DFT of one channel (DC at the array center)."""
    return np.fft.fftshift(np.fft.fftn(volume))


def ifft3(kspace: np.ndarray) -> np.ndarray:
    """Inverse of fft3 (complex output)."""
    return np.fft.ifftn(np.fft.ifftshift(kspace))


def _scalar_map(subject, fn) -> dict:
    return {
        name: fn(img) if img.kind is ImageKind.SCALAR else img
        for name, img in subject.images.items()
    }


def _per_channel(img, fn):
    data = np.stack([fn(ch.astype(np.float64)) for ch in img.data])
    return img.with_data(data.astype(np.float32))


# --------------------------------------------------------------------------
# Spike
# --------------------------------------------------------------------------


def _spike_apply(subject, params):
    spikes = [[int(v) for v in pos] for pos in (params["spikes"] or [])]
    intensities = [float(v) for v in (params["intensities"] or [])]
    if len(spikes) != len(intensities):
        raise BadPipeline("spikes and intensities must have the same length")

    def one_channel(ch):
        if not spikes:
            return np.abs(ifft3(fft3(ch)))
        k = fft3(ch)
        peak = np.max(np.abs(k))
        for pos, r in zip(spikes, intensities):
            k[tuple(pos)] += r * peak
        return np.abs(ifft3(k))

    return _scalar_map(subject, lambda img: _per_channel(img, one_channel)), dict(params)


register(
    TransformDef(
        name="Spike",
        category="mri",
        ui=False,
        params=[Param("spikes", "array"), Param("intensities", "array")],
        apply=_spike_apply,
    )
)


def _random_spike_draw(params, subject, rng):
    lo, hi = params["num_spikes"]
    count = rng.int_in(int(lo), int(hi))
    shape = subject.spatial_shape
    center = tuple(s // 2 for s in shape)
    spikes = []
    intensities = []
    for _ in range(count):
        while True:
            pos = tuple(rng.int_in(0, shape[a] - 1) for a in range(3))
            if pos != center:  # never spike the DC component
                break
        spikes.append(list(pos))
        intensities.append(rng.uniform(*params["intensity"]))
    return "Spike", {"spikes": spikes or None, "intensities": intensities or None}


register(
    TransformDef(
        name="RandomSpike",
        category="mri",
        params=[
            Param("num_spikes", "int_pair", default=(1, 1), min=0),
            Param("intensity", "float_pair", default=(1.0, 3.0), min=0.0),
        ],
        apply=lambda subject, params: (_ for _ in ()).throw(
            BadPipeline("RandomSpike resolves to Spike")
        ),
        draw=_random_spike_draw,
    )
)


# --------------------------------------------------------------------------
# Ghosting
# --------------------------------------------------------------------------


def ghost_planes(size: int, every_n: int, restore: float) -> list[int]:
    """Centered plane indices attenuated by ghosting: multiples of n outside
    the protected band |i - center| <= restore * size."""
    center = size // 2
    guard = restore * size
    return [i for i in range(0, size, every_n) if abs(i - center) > guard]


def _ghosting_apply(subject, params):
    axis = params["axis"]
    n = params["num_ghosts"]
    if n < 2:
        raise BadPipeline(f"num_ghosts must be >= 2, got {n}")
    s = params["intensity"]
    restore = params["restore"]
    if not 0.0 <= restore < 0.5:
        raise BadPipeline(f"restore must be in [0, 0.5), got {restore}")

    def one_channel(ch):
        k = fft3(ch)
        sel = [slice(None)] * 3
        for plane in ghost_planes(ch.shape[axis], n, restore):
            sel[axis] = plane
            k[tuple(sel)] *= 1.0 - s
        return np.abs(ifft3(k))

    return _scalar_map(subject, lambda img: _per_channel(img, one_channel)), dict(params)


register(
    TransformDef(
        name="Ghosting",
        category="mri",
        ui=False,
        params=[
            Param("axis", "int", default=0, min=0, max=2),
            Param("num_ghosts", "int", default=4, min=2),
            Param("intensity", "float", default=0.5, min=0.0),
            Param("restore", "float", default=0.02, min=0.0),
        ],
        apply=_ghosting_apply,
    )
)


def _random_ghosting_draw(params, subject, rng):
    axes = params["axes"]
    axis = axes[rng.int_in(0, len(axes) - 1)]
    n = rng.int_in(*[int(v) for v in params["num_ghosts"]])
    s = rng.uniform(*params["intensity"])
    return "Ghosting", {
        "axis": axis,
        "num_ghosts": n,
        "intensity": s,
        "restore": params["restore"],
    }


register(
    TransformDef(
        name="RandomGhosting",
        category="mri",
        params=[
            Param("num_ghosts", "int_pair", default=(4, 10), min=2),
            Param("axes", "axes", default=[0, 1, 2]),
            Param("intensity", "float_pair", default=(0.5, 1.0), min=0.0),
            Param("restore", "float", default=0.02, min=0.0, max=0.49),
        ],
        apply=lambda subject, params: (_ for _ in ()).throw(
            BadPipeline("RandomGhosting resolves to Ghosting")
        ),
        draw=_random_ghosting_draw,
    )
)


# --------------------------------------------------------------------------
# Motion
# --------------------------------------------------------------------------


def _motion_apply(subject, params):
    axis = params["axis"]
    degrees = [list(map(float, d)) for d in params["degrees"]]
    translations = [list(map(float, t)) for t in params["translations"]]
    times = sorted(float(t) for t in params["times"])
    if not (len(degrees) == len(translations) == len(times)):
        raise BadPipeline("degrees, translations and times must have equal length")
    if any(not 0.0 <= t <= 1.0 for t in times):
        raise BadPipeline("times must lie in [0, 1]")

    def one(img):
        center = physical_center(img.affine, img.spatial_shape)
        volumes = [img]
        for deg, tr in zip(degrees, translations):
            m = affine_matrix((1.0, 1.0, 1.0), deg, tr, center)
            coords = source_coords(np.linalg.inv(m) @ img.affine, img.spatial_shape, img.affine)
            volumes.append(sample_image(img, coords, img.affine, LINEAR, "edge", 0.0))
        size = img.spatial_shape[axis]
        bounds = [0] + [int(round(t * size)) for t in times] + [size]

        def one_channel_set(channel_idx):
            spectra = [fft3(v.data[channel_idx].astype(np.float64)) for v in volumes]
            k = np.array(spectra[0])
            sel = [slice(None)] * 3
            for seg in range(1, len(spectra)):
                lo, hi = bounds[seg], bounds[seg + 1]
                if lo < hi:
                    sel[axis] = slice(lo, hi)
                    k[tuple(sel)] = spectra[seg][tuple(sel)]
            return np.abs(ifft3(k))

        data = np.stack([one_channel_set(c) for c in range(img.num_channels)])
        return img.with_data(data.astype(np.float32))

    return _scalar_map(subject, one), dict(params)


register(
    TransformDef(
        name="Motion",
        category="mri",
        ui=False,
        params=[
            Param("axis", "int", default=0, min=0, max=2),
            Param("degrees", "array", required=True),
            Param("translations", "array", required=True),
            Param("times", "array", required=True),
        ],
        apply=_motion_apply,
    )
)


def _random_motion_draw(params, subject, rng):
    num = params["num_transforms"]
    axes = params["axes"]
    axis = axes[rng.int_in(0, len(axes) - 1)]
    degrees = [[rng.uniform(*params["degrees"]) for _ in range(3)] for _ in range(num)]
    translations = [
        [rng.uniform(*params["translation"]) for _ in range(3)] for _ in range(num)
    ]
    times = sorted(rng.uniform() for _ in range(num))
    return "Motion", {
        "axis": axis,
        "degrees": degrees,
        "translations": translations,
        "times": times,
    }


register(
    TransformDef(
        name="RandomMotion",
        category="mri",
        params=[
            Param("degrees", "float_pair", default=(-10.0, 10.0)),
            Param("translation", "float_pair", default=(-10.0, 10.0)),
            Param("num_transforms", "int", default=2, min=1),
            Param("axes", "axes", default=[0, 1, 2]),
        ],
        apply=lambda subject, params: (_ for _ in ()).throw(
            BadPipeline("RandomMotion resolves to Motion")
        ),
        draw=_random_motion_draw,
    )
)


# --------------------------------------------------------------------------
# Bias field
# --------------------------------------------------------------------------


def monomial_exponents(order: int) -> list[tuple[int, int, int]]:
    """(i, j, k) with i+j+k <= order, lexicographic; count = C(order+3, 3)."""
    return [
        (i, j, k)
        for i in range(order + 1)
        for j in range(order + 1 - i)
        for k in range(order + 1 - i - j)
    ]


def bias_field(shape, order: int, coefficients) -> np.ndarray:
    """exp of a 3D polynomial over per-axis coordinates normalized to [-1, 1]."""
    exponents = monomial_exponents(order)
    if len(coefficients) != len(exponents):
        raise BadPipeline(
            f"order {order} needs {len(exponents)} coefficients, got {len(coefficients)}"
        )
    axes_coords = [
        np.linspace(-1.0, 1.0, s) if s > 1 else np.zeros(1) for s in shape
    ]
    log_field = np.zeros(shape, dtype=np.float64)
    for (i, j, k), c in zip(exponents, coefficients):
        log_field += (
            float(c)
            * (axes_coords[0] ** i)[:, None, None]
            * (axes_coords[1] ** j)[None, :, None]
            * (axes_coords[2] ** k)[None, None, :]
        )
    return np.exp(log_field)


def _bias_field_apply(subject, params):
    order = params["order"]
    coeffs = [float(c) for c in params["coefficients"]]

    def one(img):
        field = bias_field(img.spatial_shape, order, coeffs)
        out = img.data.astype(np.float64) * field[np.newaxis]
        return img.with_data(out.astype(np.float32))

    return _scalar_map(subject, one), dict(params)


register(
    TransformDef(
        name="BiasField",
        category="mri",
        ui=False,
        params=[
            Param("order", "int", default=3, min=0, max=8),
            Param("coefficients", "array", required=True),
        ],
        apply=_bias_field_apply,
    )
)


def _random_bias_field_draw(params, subject, rng):
    order = params["order"]
    c = params["coefficients"]
    count = len(monomial_exponents(order))
    coefficients = [rng.uniform(-c, c) for _ in range(count)]
    return "BiasField", {"order": order, "coefficients": coefficients}


register(
    TransformDef(
        name="RandomBiasField",
        category="mri",
        params=[
            Param("coefficients", "float", default=0.5, min=0.0),
            Param("order", "int", default=3, min=0, max=8),
        ],
        apply=lambda subject, params: (_ for _ in ()).throw(
            BadPipeline("RandomBiasField resolves to BiasField")
        ),
        draw=_random_bias_field_draw,
    )
)
