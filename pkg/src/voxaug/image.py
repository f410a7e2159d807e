"""Image / Subject / SubjectsDataset data model.

An Image is a 4D channels-first ``(C, X, Y, Z)`` voxel array plus a 4x4
affine mapping voxel indices to physical RAS+ mm. Scalar images hold float32
after load, label maps hold uint16 (integer values >= 0). 2D data uses a
degenerate Z = 1. Images constructed from a path are lazy: only the header
is inspected until :meth:`Image.load` is called.

These are value-semantics objects: operations return new instances and never
mutate voxel arrays in place, so they are safe to move between threads.
"""

from __future__ import annotations

import enum
from pathlib import Path

import numpy as np

from .errors import InconsistentSubject, IoError, KindMismatch, NotLoaded
from .geometry import as_affine, spacing

AFFINE_TOL = 1e-5  # absorbs float32 header roundtrip noise


class ImageKind(enum.Enum):
    SCALAR = "scalar"
    LABEL = "label"


def _coerce_data(data: np.ndarray, kind: ImageKind) -> np.ndarray:
    arr = np.asarray(data)
    if arr.ndim == 3:
        arr = arr[np.newaxis]
    if arr.ndim != 4:
        raise ValueError(f"image data must be 3D or 4D channels-first, got ndim={arr.ndim}")
    if any(s < 1 for s in arr.shape):
        raise ValueError(f"all extents must be >= 1, got {arr.shape}")
    if kind is ImageKind.LABEL:
        if not np.issubdtype(arr.dtype, np.integer):
            rounded = np.rint(arr)
            if not np.allclose(arr, rounded, rtol=0, atol=0):
                raise KindMismatch("label image requires integer voxel values")
            arr = rounded
        if arr.min() < 0:
            raise KindMismatch("label image requires values >= 0")
        if arr.max() > np.iinfo(np.uint16).max:
            raise KindMismatch("label values exceed uint16 range")
        return np.ascontiguousarray(arr, dtype=np.uint16)
    return np.ascontiguousarray(arr, dtype=np.float32)


class Image:
    """One medical image: 4D voxel data + affine + kind + free-form attributes."""

    def __init__(
        self,
        data=None,
        affine=None,
        kind: ImageKind = ImageKind.SCALAR,
        path: str | Path | None = None,
        attributes: dict | None = None,
    ):
        if data is None and path is None:
            raise ValueError("Image needs voxel data or a source path")
        self.kind = kind
        self.path = Path(path) if path is not None else None
        self.attributes = dict(attributes or {})
        self._header_cache: tuple | None = None  # (shape4, affine, element_size)
        if data is not None:
            self._data = _coerce_data(data, kind)
            self._affine = as_affine(affine if affine is not None else np.eye(4))
        else:
            self._data = None
            self._affine = as_affine(affine) if affine is not None else None

    # -- lazy header access ---------------------------------------------------

    def _peek(self) -> tuple:
        if self._header_cache is None:
            from . import nifti

            if self.path is None:
                raise IoError("image has no data and no path")
            self._header_cache = nifti.peek(self.path)
        return self._header_cache

    @property
    def loaded(self) -> bool:
        return self._data is not None

    @property
    def data(self) -> np.ndarray:
        if self._data is None:
            raise NotLoaded(f"image data not loaded (path={self.path})")
        return self._data

    @property
    def affine(self) -> np.ndarray:
        if self._affine is not None:
            return self._affine
        return self._peek()[1]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        if self._data is not None:
            return self._data.shape
        return self._peek()[0]

    @property
    def spatial_shape(self) -> tuple[int, int, int]:
        return self.shape[1:]

    @property
    def num_channels(self) -> int:
        return self.shape[0]

    @property
    def spacing(self) -> np.ndarray:
        return spacing(self.affine)

    @property
    def element_size(self) -> int:
        """Bytes per voxel element: in-memory itemsize, or on-disk size if lazy."""
        if self._data is not None:
            return self._data.dtype.itemsize
        return self._peek()[2]

    def load(self) -> "Image":
        """Return a loaded copy of this image (self when already loaded)."""
        if self.loaded:
            return self
        from . import nifti

        img = nifti.read_image(self.path, kind=self.kind)
        img.attributes.update(self.attributes)
        return img

    def with_data(self, data, affine=None) -> "Image":
        """New image with replaced voxel data (and optionally affine)."""
        return Image(
            data=data,
            affine=self.affine if affine is None else affine,
            kind=self.kind,
            path=self.path,
            attributes=self.attributes,
        )

    def astype_kind(self) -> np.dtype:
        return np.dtype(np.uint16) if self.kind is ImageKind.LABEL else np.dtype(np.float32)

    def __repr__(self) -> str:
        state = "loaded" if self.loaded else "lazy"
        return f"Image(kind={self.kind.value}, shape={self.shape}, {state})"


def memory_footprint(image: Image) -> int:
    """Exact byte count C*X*Y*Z*bytes_per_element (pure integer arithmetic)."""
    n = 1
    for s in image.shape:
        n *= int(s)
    return n * int(image.element_size)


class Subject:
    """Named collection of images plus metadata and an applied-transform history."""

    def __init__(self, images: dict[str, Image], metadata: dict | None = None, history=None):
        if not images:
            raise ValueError("Subject needs at least one image")
        self.images = dict(images)
        self.metadata = dict(metadata or {})
        self.history = list(history or [])

    def __getitem__(self, name: str) -> Image:
        return self.images[name]

    def __contains__(self, name: str) -> bool:
        return name in self.images

    @property
    def image_names(self) -> list[str]:
        return list(self.images)

    @property
    def spatial_shape(self) -> tuple[int, int, int]:
        return next(iter(self.images.values())).spatial_shape

    def load(self) -> "Subject":
        if all(img.loaded for img in self.images.values()):
            return self
        return Subject(
            {name: img.load() for name, img in self.images.items()},
            metadata=self.metadata,
            history=self.history,
        )

    def with_images(self, images: dict[str, Image], extra_history=None) -> "Subject":
        """New subject with replaced images; history extended by extra_history."""
        history = self.history + list(extra_history or [])
        return Subject(images, metadata=self.metadata, history=history)

    def scalar_names(self) -> list[str]:
        return [n for n, img in self.images.items() if img.kind is ImageKind.SCALAR]

    def __repr__(self) -> str:
        return f"Subject(images={list(self.images)}, history={len(self.history)} entries)"


class ConsistencyReport:
    """Outcome of check_consistency: ok, or per-image differing attributes."""

    def __init__(self, problems: dict[str, set[str]]):
        self.problems = problems

    @property
    def ok(self) -> bool:
        return not self.problems

    def __repr__(self) -> str:
        if self.ok:
            return "ConsistencyReport(ok)"
        parts = ", ".join(f"{n}: {sorted(attrs)}" for n, attrs in self.problems.items())
        return f"ConsistencyReport({parts})"


def check_consistency(subject: Subject) -> ConsistencyReport:
    """Compare every image against the first: shape, origin, orientation, spacing.

    ok iff all spatial shapes are equal and affines agree within 1e-5
    elementwise. Otherwise each offending image is reported with the set of
    differing attributes.
    """
    names = subject.image_names
    ref = subject[names[0]]
    ref_affine = ref.affine
    ref_spacing = spacing(ref_affine)
    ref_dirs = ref_affine[:3, :3] / ref_spacing
    problems: dict[str, set[str]] = {}
    for name in names[1:]:
        img = subject[name]
        attrs: set[str] = set()
        if img.spatial_shape != ref.spatial_shape:
            attrs.add("shape")
        affine = img.affine
        if not np.allclose(affine, ref_affine, rtol=0, atol=AFFINE_TOL):
            if not np.allclose(affine[:3, 3], ref_affine[:3, 3], rtol=0, atol=AFFINE_TOL):
                attrs.add("origin")
            sp = spacing(affine)
            if not np.allclose(sp, ref_spacing, rtol=0, atol=AFFINE_TOL):
                attrs.add("spacing")
            if not np.allclose(affine[:3, :3] / sp, ref_dirs, rtol=0, atol=AFFINE_TOL):
                attrs.add("orientation")
        if attrs:
            problems[name] = attrs
    return ConsistencyReport(problems)


def require_consistent(subject: Subject) -> None:
    report = check_consistency(subject)
    if not report.ok:
        raise InconsistentSubject(repr(report))


class SubjectsDataset:
    """Ordered list of subjects with an optional transform applied on access."""

    def __init__(self, subjects: list[Subject], transform=None):
        if not subjects:
            raise ValueError("SubjectsDataset needs at least one subject")
        self.subjects = list(subjects)
        self.transform = transform

    def __len__(self) -> int:
        return len(self.subjects)

    def __getitem__(self, index: int) -> Subject:
        return self.subjects[index]

    def prepared(self, index: int, rng) -> Subject:
        """Load subject `index` and apply the dataset transform with `rng`."""
        subject = self.subjects[index].load()
        if self.transform is not None:
            from .pipeline import apply

            subject = apply(self.transform, subject, rng)
        return subject
