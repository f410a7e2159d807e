"""NIfTI-1 single-file (.nii / .nii.gz) reading and writing.

Implements the 348-byte NIfTI-1 header directly with ``struct``: endianness
is resolved from ``sizeof_hdr`` (348, or 1543569408 when byte-swapped), gzip
wrapping is detected by the 0x1F 0x8B prefix, and voxel data starts at
``vox_offset`` (extensions are skipped by honoring that offset).

Supported on-disk datatypes: uint8 (2), int16 (4), int32 (8), float32 (16),
float64 (64). ``scl_slope``/``scl_inter`` scaling is applied on read when
``scl_slope != 0``. Two-file "ni1" pairs and dim[0] > 4 are rejected.

The writer is canonical: always little-endian, sform only (sform_code = 1),
vox_offset = 352, float32 for scalar images and int16 for label maps. Label
values must fit [0, 32767] so the int16 encoding is lossless.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    InvalidQuaternion,
    IoError,
    LabelRangeError,
    TruncatedFile,
    UnsupportedDatatype,
)
from .geometry import as_affine, spacing
from .image import Image, ImageKind

HEADER_SIZE = 348
HEADER_SWAPPED = 1543569408  # 348 with bytes reversed

# field order matches the NIfTI-1 standard layout
_FIELDS = (
    ("sizeof_hdr", "i"),
    ("data_type", "10s"),
    ("db_name", "18s"),
    ("extents", "i"),
    ("session_error", "h"),
    ("regular", "1s"),
    ("dim_info", "B"),
    ("dim", "8h"),
    ("intent_p1", "f"),
    ("intent_p2", "f"),
    ("intent_p3", "f"),
    ("intent_code", "h"),
    ("datatype", "h"),
    ("bitpix", "h"),
    ("slice_start", "h"),
    ("pixdim", "8f"),
    ("vox_offset", "f"),
    ("scl_slope", "f"),
    ("scl_inter", "f"),
    ("slice_end", "h"),
    ("slice_code", "b"),
    ("xyzt_units", "B"),
    ("cal_max", "f"),
    ("cal_min", "f"),
    ("slice_duration", "f"),
    ("toffset", "f"),
    ("glmax", "i"),
    ("glmin", "i"),
    ("descrip", "80s"),
    ("aux_file", "24s"),
    ("qform_code", "h"),
    ("sform_code", "h"),
    ("quatern_b", "f"),
    ("quatern_c", "f"),
    ("quatern_d", "f"),
    ("qoffset_x", "f"),
    ("qoffset_y", "f"),
    ("qoffset_z", "f"),
    ("srow_x", "4f"),
    ("srow_y", "4f"),
    ("srow_z", "4f"),
    ("intent_name", "16s"),
    ("magic", "4s"),
)
_STRUCT_BODY = "".join(fmt for _, fmt in _FIELDS)
assert struct.calcsize("<" + _STRUCT_BODY) == HEADER_SIZE

DTYPES = {2: np.uint8, 4: np.int16, 8: np.int32, 16: np.float32, 64: np.float64}
_CODE_FOR = {np.dtype(np.float32): 16, np.dtype(np.int16): 4}

MAGIC_SINGLE = b"n+1\x00"
MAGIC_PAIR = b"ni1\x00"


@dataclass
class NiftiHeader:
    sizeof_hdr: int = HEADER_SIZE
    dim: tuple = (3, 1, 1, 1, 1, 1, 1, 1)
    datatype: int = 16
    bitpix: int = 32
    pixdim: tuple = (1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0)
    vox_offset: float = 352.0
    scl_slope: float = 1.0
    scl_inter: float = 0.0
    qform_code: int = 0
    sform_code: int = 1
    quatern_b: float = 0.0
    quatern_c: float = 0.0
    quatern_d: float = 0.0
    qoffset_x: float = 0.0
    qoffset_y: float = 0.0
    qoffset_z: float = 0.0
    srow_x: tuple = (1.0, 0.0, 0.0, 0.0)
    srow_y: tuple = (0.0, 1.0, 0.0, 0.0)
    srow_z: tuple = (0.0, 0.0, 1.0, 0.0)
    magic: bytes = MAGIC_SINGLE
    byte_order: str = "<"
    extra: dict = field(default_factory=dict)


def _parse_header(raw: bytes) -> NiftiHeader:
    if len(raw) < HEADER_SIZE:
        raise TruncatedFile(f"header needs {HEADER_SIZE} bytes, got {len(raw)}")
    (first,) = struct.unpack("<i", raw[:4])
    if first == HEADER_SIZE:
        order = "<"
    elif first == HEADER_SWAPPED:
        order = ">"
    else:
        raise BadMagic(f"sizeof_hdr is {first}, not a NIfTI-1 header")
    values = struct.unpack(order + _STRUCT_BODY, raw[:HEADER_SIZE])
    fields: dict = {}
    i = 0
    for name, fmt in _FIELDS:
        count = struct.calcsize(fmt) // struct.calcsize(fmt[-1])
        if fmt[-1] == "s":
            fields[name] = values[i]
            i += 1
        elif count == 1:
            fields[name] = values[i]
            i += 1
        else:
            fields[name] = tuple(values[i : i + count])
            i += count
    magic = fields["magic"]
    if magic == MAGIC_PAIR:
        raise IoError("two-file NIfTI pairs (ni1) are not supported, use single .nii")
    if magic != MAGIC_SINGLE:
        raise BadMagic(f"bad magic {magic!r}")
    header = NiftiHeader(
        sizeof_hdr=fields["sizeof_hdr"],
        dim=fields["dim"],
        datatype=fields["datatype"],
        bitpix=fields["bitpix"],
        pixdim=fields["pixdim"],
        vox_offset=fields["vox_offset"],
        scl_slope=fields["scl_slope"],
        scl_inter=fields["scl_inter"],
        qform_code=fields["qform_code"],
        sform_code=fields["sform_code"],
        quatern_b=fields["quatern_b"],
        quatern_c=fields["quatern_c"],
        quatern_d=fields["quatern_d"],
        qoffset_x=fields["qoffset_x"],
        qoffset_y=fields["qoffset_y"],
        qoffset_z=fields["qoffset_z"],
        srow_x=fields["srow_x"],
        srow_y=fields["srow_y"],
        srow_z=fields["srow_z"],
        magic=magic,
        byte_order=order,
        extra={k: v for k, v in fields.items() if k not in NiftiHeader.__dataclass_fields__},
    )
    ndim = header.dim[0]
    if not 1 <= ndim <= 7:
        raise BadMagic(f"dim[0] = {ndim} outside [1, 7]")
    if ndim > 4:
        raise IoError(f"only up to 4D images are supported, file has dim[0] = {ndim}")
    return header


def affine_from_header(header: NiftiHeader) -> np.ndarray:
    """Affine per NIfTI precedence: sform rows, else qform quaternion, else pixdim."""
    if header.sform_code > 0:
        affine = np.eye(4)
        affine[0] = header.srow_x
        affine[1] = header.srow_y
        affine[2] = header.srow_z
        return as_affine(affine)
    if header.qform_code > 0:
        b, c, d = header.quatern_b, header.quatern_c, header.quatern_d
        norm2 = b * b + c * c + d * d
        if norm2 > 1.0 + 1e-6:
            raise InvalidQuaternion(f"b^2+c^2+d^2 = {norm2} > 1")
        a = float(np.sqrt(max(0.0, 1.0 - norm2)))
        rot = np.array(
            [
                [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
                [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
                [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
            ]
        )
        qfac = -1.0 if header.pixdim[0] < 0 else 1.0
        sp = np.array(header.pixdim[1:4], dtype=np.float64)
        affine = np.eye(4)
        affine[:3, :3] = rot * sp
        affine[:3, 2] *= qfac
        affine[:3, 3] = (header.qoffset_x, header.qoffset_y, header.qoffset_z)
        return as_affine(affine)
    affine = np.diag([header.pixdim[1], header.pixdim[2], header.pixdim[3], 1.0])
    return as_affine(affine)


def _shape4_from_dim(dim: tuple) -> tuple[int, int, int, int]:
    ndim = dim[0]
    sizes = [max(1, int(dim[k])) if k <= ndim else 1 for k in range(1, 5)]
    x, y, z, t = sizes
    return (t, x, y, z)  # channels-first; NIfTI dim4 maps to C


def _read_raw(path: Path, header_only: bool) -> bytes:
    try:
        with open(path, "rb") as f:
            prefix = f.read(2)
            f.seek(0)
            if prefix == b"\x1f\x8b":
                with gzip.open(f) as gz:
                    return gz.read(HEADER_SIZE) if header_only else gz.read()
            return f.read(HEADER_SIZE) if header_only else f.read()
    except FileNotFoundError as e:
        raise IoError(f"no such file: {path}") from e
    except (OSError, EOFError) as e:
        raise IoError(f"cannot read {path}: {e}") from e


def read_header(path: str | Path) -> NiftiHeader:
    return _parse_header(_read_raw(Path(path), header_only=True))


def peek(path: str | Path) -> tuple[tuple[int, int, int, int], np.ndarray, int]:
    """Header-only inspection: (shape (C,X,Y,Z), affine, on-disk element size)."""
    header = read_header(path)
    if header.datatype not in DTYPES:
        raise UnsupportedDatatype(f"datatype code {header.datatype}")
    return _shape4_from_dim(header.dim), affine_from_header(header), header.bitpix // 8


def read_image(path: str | Path, kind: ImageKind = ImageKind.SCALAR) -> Image:
    """Read a NIfTI-1 file into a loaded channels-first Image."""
    path = Path(path)
    raw = _read_raw(path, header_only=False)
    return _image_from_bytes(raw, kind, path)


def read_image_bytes(raw: bytes, kind: ImageKind = ImageKind.SCALAR) -> Image:
    """Parse NIfTI-1 bytes (optionally gzip-wrapped) into a loaded Image."""
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as e:
            raise IoError(f"corrupt gzip stream: {e}") from e
    return _image_from_bytes(raw, kind, None)


def _image_from_bytes(raw: bytes, kind: ImageKind, path: Path | None) -> Image:
    header = _parse_header(raw)
    if header.datatype not in DTYPES:
        raise UnsupportedDatatype(f"datatype code {header.datatype}")
    shape4 = _shape4_from_dim(header.dim)
    c, x, y, z = shape4
    dtype = np.dtype(DTYPES[header.datatype]).newbyteorder(header.byte_order)
    offset = int(header.vox_offset)
    nbytes = c * x * y * z * dtype.itemsize
    if len(raw) < offset + nbytes:
        raise TruncatedFile(
            f"need {offset + nbytes} bytes for voxel data, file has {len(raw)}"
        )
    flat = np.frombuffer(raw, dtype=dtype, count=c * x * y * z, offset=offset)
    # on-disk order is Fortran (x fastest), layout (X, Y, Z, C)
    data = flat.reshape((x, y, z, c), order="F").transpose(3, 0, 1, 2)
    if header.scl_slope != 0.0 and (header.scl_slope, header.scl_inter) != (1.0, 0.0):
        data = data.astype(np.float64) * header.scl_slope + header.scl_inter
    img = Image(data=data, affine=affine_from_header(header), kind=kind, path=path)
    return img


def write_image(image: Image, path: str | Path) -> None:
    """Write a loaded Image as canonical little-endian NIfTI-1."""
    path = Path(path)
    data = image.data
    if image.kind is ImageKind.LABEL:
        if data.max() > 32767:
            raise LabelRangeError(
                f"label value {int(data.max())} exceeds int16 range [0, 32767]"
            )
        out = data.astype("<i2")
        datatype, bitpix = 4, 16
    else:
        out = data.astype("<f4")
        datatype, bitpix = 16, 32
    c, x, y, z = out.shape
    ndim = 4 if c > 1 else 3
    dim = (ndim, x, y, z, c if ndim == 4 else 1, 1, 1, 1)
    # quantize to the stored float32 rows first so pixdim matches what a
    # reader reconstructs (keeps write-read-write byte-identical)
    affine = image.affine.astype(np.float32).astype(np.float64)
    sp = spacing(affine)
    pixdim = (1.0, float(sp[0]), float(sp[1]), float(sp[2]), 0.0, 0.0, 0.0, 0.0)
    values: list = []
    fields = dict(
        sizeof_hdr=HEADER_SIZE,
        data_type=b"",
        db_name=b"",
        extents=0,
        session_error=0,
        regular=b"r",
        dim_info=0,
        dim=dim,
        intent_p1=0.0,
        intent_p2=0.0,
        intent_p3=0.0,
        intent_code=0,
        datatype=datatype,
        bitpix=bitpix,
        slice_start=0,
        pixdim=pixdim,
        vox_offset=352.0,
        scl_slope=1.0,
        scl_inter=0.0,
        slice_end=0,
        slice_code=0,
        xyzt_units=2,  # millimeters
        cal_max=0.0,
        cal_min=0.0,
        slice_duration=0.0,
        toffset=0.0,
        glmax=0,
        glmin=0,
        descrip=b"voxaug",
        aux_file=b"",
        qform_code=0,
        sform_code=1,
        quatern_b=0.0,
        quatern_c=0.0,
        quatern_d=0.0,
        qoffset_x=float(affine[0, 3]),
        qoffset_y=float(affine[1, 3]),
        qoffset_z=float(affine[2, 3]),
        srow_x=tuple(float(v) for v in affine[0]),
        srow_y=tuple(float(v) for v in affine[1]),
        srow_z=tuple(float(v) for v in affine[2]),
        intent_name=b"",
        magic=MAGIC_SINGLE,
    )
    for name, fmt in _FIELDS:
        v = fields[name]
        if isinstance(v, tuple):
            values.extend(v)
        else:
            values.append(v)
    header = struct.pack("<" + _STRUCT_BODY, *values)
    payload = header + b"\x00\x00\x00\x00"  # no extensions
    payload += out.transpose(1, 2, 3, 0).tobytes(order="F")
    try:
        if path.name.endswith(".gz"):
            with open(path, "wb") as f:
                # blank filename, fixed mtime and level: byte-deterministic output
                with gzip.GzipFile(
                    filename="", fileobj=f, mode="wb", compresslevel=6, mtime=0
                ) as gz:
                    gz.write(payload)
        else:
            path.write_bytes(payload)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
