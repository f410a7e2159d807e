"""Patch extraction, dense grid sampling/aggregation, and the patch queue.

Samplers never pad: a patch must fit inside the volume. A patch is a cropped
Subject whose affines are translated so every voxel keeps its physical
position; ``provenance`` carries the source subject index.

``queue_epoch`` prepares subjects (load + transform + sample) with one worker
pool, fills a bounded buffer of at most ``max_length`` patches, shuffles it
when full (``shuffle_patches``), and yields the buffer to the consumer. Each
subject is prepared under ``seed_for(seed, subject_index, epoch)``, so patch
content is identical for any worker count; ordering is deterministic too
because results are collected in submission order.
"""

from __future__ import annotations

import concurrent.futures
import itertools
import multiprocessing
from dataclasses import dataclass

import numpy as np

from .errors import (
    AllZeroProbability,
    IncompleteCoverage,
    PatchTooLarge,
    SubjectPrepareError,
)
from .image import Subject, SubjectsDataset
from .rng import Rng, seed_for


@dataclass(frozen=True)
class PatchLocation:
    origin: tuple
    size: tuple

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(int(v) for v in self.origin))
        object.__setattr__(self, "size", tuple(int(v) for v in self.size))
        if any(v < 0 for v in self.origin) or any(v < 1 for v in self.size):
            raise ValueError(f"bad patch location {self.origin} size {self.size}")


@dataclass
class Patch:
    subject: Subject
    location: PatchLocation
    provenance: int = 0


def _check_patch_size(patch_size, shape) -> tuple:
    size = tuple(int(v) for v in patch_size)
    if len(size) != 3 or any(v < 1 for v in size):
        raise ValueError(f"patch size must be 3 positive ints, got {patch_size}")
    if any(size[a] > shape[a] for a in range(3)):
        raise PatchTooLarge(f"patch {size} exceeds volume {tuple(shape)}")
    return size


def extract_patch(subject: Subject, location: PatchLocation, provenance: int = 0) -> Patch:
    """Crop all images of a subject to one location, translating affines."""
    o, s = location.origin, location.size
    sl = (slice(None),) + tuple(slice(o[a], o[a] + s[a]) for a in range(3))

    def crop_one(img):
        data = np.ascontiguousarray(img.data[sl])
        affine = np.array(img.affine)
        affine[:3, 3] = img.affine[:3, :3] @ np.asarray(o, dtype=np.float64) + img.affine[:3, 3]
        return img.with_data(data, affine=affine)

    images = {name: crop_one(img) for name, img in subject.images.items()}
    cropped = Subject(images, metadata=subject.metadata, history=subject.history)
    return Patch(cropped, location, provenance)


def uniform_sample(subject: Subject, patch_size, rng: Rng, provenance: int = 0) -> Patch:
    """Patch whose origin is uniform over all positions where it fits."""
    shape = subject.spatial_shape
    size = _check_patch_size(patch_size, shape)
    origin = tuple(rng.int_in(0, shape[a] - size[a]) for a in range(3))
    return extract_patch(subject, PatchLocation(origin, size), provenance)


def weighted_sample(
    subject: Subject,
    patch_size,
    probability_image_name: str,
    rng: Rng,
    provenance: int = 0,
) -> Patch:
    """Patch center drawn proportionally to a probability image, restricted to
    centers where the patch fits (border margin excluded)."""
    shape = subject.spatial_shape
    size = _check_patch_size(patch_size, shape)
    prob_img = subject[probability_image_name]
    prob = prob_img.data[0].astype(np.float64)
    if prob.min() < 0:
        raise ValueError("probability image must be non-negative")
    lo = [size[a] // 2 for a in range(3)]
    # center c maps to origin c - size//2; valid centers give shape-size+1 positions
    region = prob[tuple(slice(lo[a], lo[a] + shape[a] - size[a] + 1) for a in range(3))]
    flat = region.ravel()
    total = flat.sum()
    if total <= 0:
        raise AllZeroProbability("probability map is zero over the valid-center region")
    cum = np.cumsum(flat)
    u = rng.uniform() * total
    idx = min(int(np.searchsorted(cum, u, side="right")), flat.size - 1)
    local = np.unravel_index(idx, region.shape)
    origin = tuple(int(local[a]) for a in range(3))  # center - size//2 == local index
    return extract_patch(subject, PatchLocation(origin, size), provenance)


def _axis_positions(extent: int, patch: int, overlap: int) -> list[int]:
    stride = patch - overlap
    positions = list(range(0, extent - patch + 1, stride))
    if positions[-1] != extent - patch:
        positions.append(extent - patch)  # clamp the final patch inside
    return positions


def grid_locations(volume_shape, patch_size, overlap=0) -> list[PatchLocation]:
    """Dense sliding-window locations covering every voxel.

    Per-axis positions advance by (patch - overlap); the last position is
    clamped to shape - patch so the final patch fits. Positions are
    deduplicated and sorted; the union of patches covers the whole volume.
    """
    shape = tuple(int(v) for v in volume_shape)
    size = _check_patch_size(patch_size, shape)
    if np.isscalar(overlap):
        overlap = (int(overlap),) * 3
    overlap = tuple(int(v) for v in overlap)
    for a in range(3):
        if not 0 <= overlap[a] < size[a]:
            raise ValueError(f"overlap must satisfy 0 <= overlap < patch, got {overlap}")
    axes = [_axis_positions(shape[a], size[a], overlap[a]) for a in range(3)]
    return [PatchLocation(origin, size) for origin in itertools.product(*axes)]


class GridAggregator:
    """Assemble a volume from (prediction, location) pairs on a sampling grid.

    crop mode: neighboring patches split their overlap midway, so every voxel
    is written exactly once (requires even per-axis overlap; clamped final
    patches are handled by the midpoint rule). average mode: overlapping
    contributions are averaged with per-voxel counts.
    """

    def __init__(self, volume_shape, patch_size, overlap=0, mode: str = "crop"):
        if mode not in ("crop", "average"):
            raise ValueError(f"mode must be crop or average, got {mode}")
        self.mode = mode
        self.volume_shape = tuple(int(v) for v in volume_shape)
        self.patch_size = tuple(int(v) for v in patch_size)
        if np.isscalar(overlap):
            overlap = (int(overlap),) * 3
        self.overlap = tuple(int(v) for v in overlap)
        if mode == "crop" and any(v % 2 for v in self.overlap):
            raise ValueError(f"crop mode requires even overlaps, got {self.overlap}")
        self._locations = grid_locations(self.volume_shape, self.patch_size, self.overlap)
        self._expected = {loc.origin for loc in self._locations}
        self._received: set = set()
        # per-axis ownership: split each overlap midway between neighbors
        self._bounds = []
        for a in range(3):
            positions = sorted({loc.origin[a] for loc in self._locations})
            cuts = [0]
            for i in range(len(positions) - 1):
                cuts.append((positions[i + 1] + positions[i] + self.patch_size[a]) // 2)
            cuts.append(self.volume_shape[a])
            self._bounds.append({p: (cuts[i], cuts[i + 1]) for i, p in enumerate(positions)})
        self._sum = None
        self._count = None
        self._out = None

    def _ensure_buffers(self, channels: int, dtype):
        if self.mode == "average":
            if self._sum is None:
                self._sum = np.zeros((channels,) + self.volume_shape, dtype=np.float64)
                self._count = np.zeros(self.volume_shape, dtype=np.int64)
        else:
            if self._out is None:
                self._out = np.zeros((channels,) + self.volume_shape, dtype=dtype)
                self._count = np.zeros(self.volume_shape, dtype=np.int64)

    def add(self, prediction: np.ndarray, location: PatchLocation) -> None:
        pred = np.asarray(prediction)
        if pred.ndim == 3:
            pred = pred[np.newaxis]
        if pred.shape[1:] != self.patch_size:
            raise ValueError(f"prediction shape {pred.shape[1:]} != patch {self.patch_size}")
        if location.origin not in self._expected:
            raise ValueError(f"location {location.origin} is not on the sampling grid")
        self._ensure_buffers(pred.shape[0], pred.dtype)
        o = location.origin
        if self.mode == "average":
            vol_sl = (slice(None),) + tuple(
                slice(o[a], o[a] + self.patch_size[a]) for a in range(3)
            )
            self._sum[vol_sl] += pred
            self._count[vol_sl[1:]] += 1
        else:
            vol_sl, patch_sl = [slice(None)], [slice(None)]
            for a in range(3):
                start, end = self._bounds[a][o[a]]
                vol_sl.append(slice(start, end))
                patch_sl.append(slice(start - o[a], end - o[a]))
            self._out[tuple(vol_sl)] = pred[tuple(patch_sl)]
            self._count[tuple(vol_sl[1:])] += 1
        self._received.add(location.origin)

    def finalize(self) -> np.ndarray:
        missing = self._expected - self._received
        if missing:
            raise IncompleteCoverage(f"{len(missing)} grid locations never received")
        if self.mode == "average":
            return (self._sum / self._count[np.newaxis]).astype(np.float64)
        return self._out

    @property
    def write_counts(self) -> np.ndarray:
        return self._count


# --------------------------------------------------------------------------
# samplers as picklable objects for the queue
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformSampler:
    patch_size: tuple

    def __call__(self, subject, rng, provenance=0):
        return uniform_sample(subject, self.patch_size, rng, provenance)


@dataclass(frozen=True)
class WeightedSampler:
    patch_size: tuple
    probability_image: str

    def __call__(self, subject, rng, provenance=0):
        return weighted_sample(
            subject, self.patch_size, self.probability_image, rng, provenance
        )


# --------------------------------------------------------------------------
# the patch queue
# --------------------------------------------------------------------------


@dataclass
class QueueConfig:
    max_length: int
    samples_per_volume: int
    num_workers: int = 1
    shuffle_subjects: bool = True
    shuffle_patches: bool = True
    seed: int = 0
    epoch: int = 0

    def __post_init__(self):
        if self.samples_per_volume < 1:
            raise ValueError("samples_per_volume must be >= 1")
        if self.max_length < self.samples_per_volume:
            raise ValueError("max_length must be >= samples_per_volume")
        if self.num_workers < 1:
            raise ValueError("num_workers must be >= 1")


def _prepare_subject(args):
    (index, subject, transform, sampler, samples_per_volume, seed, epoch) = args
    try:
        rng = Rng(seed_for(seed, index, epoch))
        subject = subject.load()
        if transform is not None:
            from .pipeline import apply

            subject = apply(transform, subject, rng)
        return [sampler(subject, rng, provenance=index) for _ in range(samples_per_volume)]
    except Exception as e:  # propagate with the subject index attached
        raise SubjectPrepareError(index, e) from e


def queue_epoch(dataset: SubjectsDataset, sampler, config: QueueConfig):
    """Yield one epoch of patches: every subject contributes exactly
    ``samples_per_volume`` patches, prepared by ``num_workers`` workers."""
    n = len(dataset)
    order = list(range(n))
    order_rng = Rng(seed_for(config.seed, n, config.epoch))
    if config.shuffle_subjects:
        order_rng.shuffle(order)
    block = max(1, config.max_length // config.samples_per_volume)

    def tasks():
        for index in order:
            yield (
                index,
                dataset[index],
                dataset.transform,
                sampler,
                config.samples_per_volume,
                config.seed,
                config.epoch,
            )

    def blocks(results):
        """Group per-subject patch lists into buffer-sized blocks."""
        buffer = []
        pending = 0
        for patches in results:
            buffer.extend(patches)
            pending += 1
            if pending == block:
                yield buffer
                buffer, pending = [], 0
        if buffer:
            yield buffer

    if config.num_workers == 1:
        results = map(_prepare_subject, tasks())
        for buffer in blocks(results):
            if config.shuffle_patches:
                order_rng.shuffle(buffer)
            yield from buffer
        return

    ctx = multiprocessing.get_context(
        "fork" if "fork" in multiprocessing.get_all_start_methods() else "spawn"
    )
    with concurrent.futures.ProcessPoolExecutor(
        max_workers=config.num_workers, mp_context=ctx
    ) as pool:

        def results():
            # windowed submission keeps at most one block in flight
            task_iter = tasks()
            futures = []
            open_tasks = True
            while futures or open_tasks:
                while open_tasks and len(futures) < block:
                    try:
                        futures.append(pool.submit(_prepare_subject, next(task_iter)))
                    except StopIteration:
                        open_tasks = False
                yield futures.pop(0).result()

        for buffer in blocks(results()):
            if config.shuffle_patches:
                order_rng.shuffle(buffer)
            yield from buffer


def epoch_patches(dataset: SubjectsDataset, sampler, config: QueueConfig) -> list:
    """Materialize one full epoch (convenience for tests and benchmarks)."""
    return list(queue_epoch(dataset, sampler, config))
