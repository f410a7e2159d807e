"""NIfTI reader/writer tests.

Fixture files are produced by an independent header-packing oracle below
(explicit struct offsets from the public NIfTI-1 layout), never by the
writer under test.
"""

import gzip
import struct

import numpy as np
import pytest

from voxaug.errors import (
    BadMagic,
    InvalidQuaternion,
    IoError,
    LabelRangeError,
    TruncatedFile,
    UnsupportedDatatype,
)
from voxaug.image import Image, ImageKind
from voxaug.nifti import peek, read_header, read_image, write_image

from oracles import DTYPES, pack_nifti

IDENTITY_ROWS = [(1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0)]


@pytest.fixture
def cube(tmp_path):
    rs = np.random.RandomState(42)
    arr = rs.rand(8, 8, 8).astype(np.float32)
    path = tmp_path / "cube.nii"
    path.write_bytes(pack_nifti(arr, sform_rows=IDENTITY_ROWS))
    return path, arr


def test_read_basic_fixture(cube):
    path, arr = cube
    img = read_image(path)
    assert img.shape == (1, 8, 8, 8)
    assert img.loaded
    assert np.allclose(img.affine, np.eye(4))
    assert np.array_equal(img.data[0], arr)


def test_gzip_transparency(cube, tmp_path):
    path, arr = cube
    gz_path = tmp_path / "cube.nii.gz"
    gz_path.write_bytes(gzip.compress(path.read_bytes()))
    plain = read_image(path)
    zipped = read_image(gz_path)
    assert np.array_equal(plain.data, zipped.data)
    assert np.array_equal(plain.affine, zipped.affine)


def test_bad_magic(tmp_path):
    arr = np.zeros((2, 2, 2), dtype=np.float32)
    raw = bytearray(pack_nifti(arr, sform_rows=IDENTITY_ROWS))
    raw[344:348] = b"XXXX"
    path = tmp_path / "bad.nii"
    path.write_bytes(bytes(raw))
    with pytest.raises(BadMagic):
        read_image(path)


def test_pair_magic_rejected(tmp_path):
    arr = np.zeros((2, 2, 2), dtype=np.float32)
    path = tmp_path / "pair.nii"
    path.write_bytes(pack_nifti(arr, sform_rows=IDENTITY_ROWS, magic=b"ni1\x00"))
    with pytest.raises(IoError):
        read_image(path)


def test_missing_file(tmp_path):
    with pytest.raises(IoError):
        read_image(tmp_path / "nope.nii")


def _random_affine_image(shape, seed=0, kind=ImageKind.SCALAR):
    rs = np.random.RandomState(seed)
    theta = 0.3
    rot = np.array(
        [
            [np.cos(theta), -np.sin(theta), 0],
            [np.sin(theta), np.cos(theta), 0],
            [0, 0, 1],
        ]
    )
    affine = np.eye(4)
    affine[:3, :3] = rot @ np.diag([0.7, 1.3, 2.1])
    affine[:3, 3] = (4.5, -3.25, 10.0)
    if kind is ImageKind.LABEL:
        data = rs.randint(0, 9, size=shape).astype(np.int32)
    else:
        data = rs.randn(*shape).astype(np.float32)
    return Image(data=data, affine=affine, kind=kind)


@pytest.mark.parametrize("suffix", [".nii", ".nii.gz"])
def test_roundtrip_scalar(tmp_path, suffix):
    img = _random_affine_image((1, 5, 6, 7))
    path = tmp_path / f"x{suffix}"
    write_image(img, path)
    back = read_image(path)
    assert np.array_equal(back.data, img.data)  # bit-exact voxels
    assert np.max(np.abs(back.affine - img.affine)) < 1e-5  # float32 header rows


def test_roundtrip_multichannel(tmp_path):
    img = _random_affine_image((3, 4, 5, 6))
    path = tmp_path / "mc.nii"
    write_image(img, path)
    back = read_image(path)
    assert back.shape == (3, 4, 5, 6)
    assert np.array_equal(back.data, img.data)


def test_label_roundtrip_and_range(tmp_path):
    img = _random_affine_image((1, 4, 4, 4), kind=ImageKind.LABEL)
    path = tmp_path / "lab.nii"
    write_image(img, path)
    back = read_image(path, kind=ImageKind.LABEL)
    assert back.data.dtype == np.uint16
    assert np.array_equal(back.data, img.data)

    big = Image(data=np.full((1, 2, 2, 2), 40000, dtype=np.uint16), kind=ImageKind.LABEL)
    with pytest.raises(LabelRangeError):
        write_image(big, tmp_path / "big.nii")


def test_nonfinite_passthrough(tmp_path):
    data = np.zeros((1, 2, 2, 2), dtype=np.float32)
    data[0, 0, 0, 0] = np.nan
    data[0, 1, 0, 0] = np.inf
    data[0, 0, 1, 0] = -np.inf
    img = Image(data=data)
    path = tmp_path / "nan.nii"
    write_image(img, path)
    back = read_image(path)
    assert back.data.tobytes() == data.tobytes()


def quaternion_oracle(b, c, d, pixdim, qfac, offset):
    """Independent evaluation of the published quaternion-to-matrix formula."""
    a = np.sqrt(max(0.0, 1.0 - (b * b + c * c + d * d)))
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    m = np.eye(4)
    m[:3, :3] = rot @ np.diag([pixdim[0], pixdim[1], pixdim[2] * qfac])
    m[:3, 3] = offset
    return m


def test_qform_trivial_quaternion(tmp_path):
    arr = np.zeros((3, 3, 3), dtype=np.float32)
    path = tmp_path / "q.nii"
    path.write_bytes(
        pack_nifti(arr, pixdim=(2.0, 2.0, 2.0), qform={"b": 0, "c": 0, "d": 0, "qfac": 1.0})
    )
    img = read_image(path)
    assert np.allclose(img.affine, np.diag([2.0, 2.0, 2.0, 1.0]))


def test_qform_rotation_quaternion(tmp_path):
    b, c, d = 0.5, 0.25, -0.3
    arr = np.zeros((3, 3, 3), dtype=np.float32)
    path = tmp_path / "qr.nii"
    path.write_bytes(
        pack_nifti(
            arr,
            pixdim=(1.0, 2.0, 3.0),
            qform={"b": b, "c": c, "d": d, "qfac": -1.0, "offset": (5.0, 6.0, 7.0)},
        )
    )
    img = read_image(path)
    expected = quaternion_oracle(b, c, d, (1.0, 2.0, 3.0), -1.0, (5.0, 6.0, 7.0))
    assert np.allclose(img.affine, expected, atol=1e-6)


def test_invalid_quaternion(tmp_path):
    arr = np.zeros((2, 2, 2), dtype=np.float32)
    path = tmp_path / "qbad.nii"
    path.write_bytes(pack_nifti(arr, qform={"b": 1.2, "c": 0.0, "d": 0.0}))
    with pytest.raises(InvalidQuaternion):
        read_image(path)


def test_fallback_affine_from_pixdim(tmp_path):
    arr = np.zeros((4, 4, 4), dtype=np.float32)
    path = tmp_path / "f.nii"
    path.write_bytes(pack_nifti(arr, pixdim=(0.66, 0.66, 0.30)))
    img = read_image(path)
    assert np.allclose(img.affine, np.diag([0.66, 0.66, 0.30, 1.0]))
    assert np.allclose(img.spacing, (0.66, 0.66, 0.30))


def test_sform_takes_precedence(tmp_path):
    arr = np.zeros((2, 2, 2), dtype=np.float32)
    rows = [(2, 0, 0, 0), (0, 2, 0, 0), (0, 0, 2, 0)]
    path = tmp_path / "s.nii"
    path.write_bytes(
        pack_nifti(arr, sform_rows=rows, qform={"b": 0, "c": 0, "d": 0}, pixdim=(3, 3, 3))
    )
    img = read_image(path)
    assert np.allclose(img.affine, np.diag([2.0, 2.0, 2.0, 1.0]))


def test_big_endian_fixture(tmp_path):
    rs = np.random.RandomState(1)
    arr = (rs.rand(4, 5, 6) * 100).astype(np.float32)
    le = tmp_path / "le.nii"
    be = tmp_path / "be.nii"
    le.write_bytes(pack_nifti(arr, order="<", sform_rows=IDENTITY_ROWS))
    be.write_bytes(pack_nifti(arr, order=">", sform_rows=IDENTITY_ROWS))
    img_le = read_image(le)
    img_be = read_image(be)
    assert read_header(be).byte_order == ">"
    assert np.array_equal(img_le.data, img_be.data)
    assert np.array_equal(img_le.affine, img_be.affine)
    # roundtrip property holds for both endiannesses (writer is canonical LE)
    out = tmp_path / "out.nii"
    write_image(img_be, out)
    again = read_image(out)
    assert np.array_equal(again.data, img_be.data)


@pytest.mark.parametrize("code", [2, 4, 8, 16, 64])
def test_all_datatypes_with_scaling(tmp_path, code):
    rs = np.random.RandomState(code)
    if code in (2,):
        arr = rs.randint(0, 200, (3, 3, 3)).astype(DTYPES[code])
    elif code in (4, 8):
        arr = rs.randint(-100, 100, (3, 3, 3)).astype(DTYPES[code])
    else:
        arr = rs.rand(3, 3, 3).astype(DTYPES[code])
    path = tmp_path / f"dt{code}.nii"
    path.write_bytes(pack_nifti(arr, datatype=code, sform_rows=IDENTITY_ROWS, slope=2.0, inter=-1.0))
    img = read_image(path)
    expected = arr.astype(np.float64) * 2.0 - 1.0
    assert np.allclose(img.data[0], expected, atol=1e-6)
    # slope 0 means no scaling
    path2 = tmp_path / f"dt{code}raw.nii"
    path2.write_bytes(pack_nifti(arr, datatype=code, sform_rows=IDENTITY_ROWS, slope=0.0))
    img2 = read_image(path2)
    assert np.allclose(img2.data[0], arr.astype(np.float64), atol=1e-6)


def test_unsupported_datatype(tmp_path):
    arr = np.zeros((2, 2, 2), dtype=np.float32)
    raw = bytearray(pack_nifti(arr, sform_rows=IDENTITY_ROWS))
    struct.pack_into("<h", raw, 70, 128)  # RGB24
    path = tmp_path / "rgb.nii"
    path.write_bytes(bytes(raw))
    with pytest.raises(UnsupportedDatatype):
        read_image(path)


def test_truncated_header_and_data(tmp_path):
    arr = np.ones((4, 4, 4), dtype=np.float32)
    full = pack_nifti(arr, sform_rows=IDENTITY_ROWS)
    p1 = tmp_path / "t1.nii"
    p1.write_bytes(full[:100])
    with pytest.raises(TruncatedFile):
        read_image(p1)
    p2 = tmp_path / "t2.nii"
    p2.write_bytes(full[:-50])
    with pytest.raises(TruncatedFile):
        read_image(p2)


def test_dim0_above_4_rejected(tmp_path):
    arr = np.zeros((2, 2, 2, 1, 2), dtype=np.float32)
    path = tmp_path / "d5.nii"
    path.write_bytes(pack_nifti(arr, sform_rows=IDENTITY_ROWS))
    with pytest.raises(IoError):
        read_image(path)


def test_vox_offset_skips_extensions(tmp_path):
    rs = np.random.RandomState(3)
    arr = rs.rand(3, 3, 3).astype(np.float32)
    path = tmp_path / "ext.nii"
    path.write_bytes(pack_nifti(arr, sform_rows=IDENTITY_ROWS, vox_offset=368))
    img = read_image(path)
    assert np.array_equal(img.data[0], arr)


def test_2d_image_degenerate_z(tmp_path):
    arr = np.arange(12, dtype=np.float32).reshape(3, 4)
    path = tmp_path / "flat.nii"
    path.write_bytes(pack_nifti(arr, sform_rows=IDENTITY_ROWS))
    img = read_image(path)
    assert img.shape == (1, 3, 4, 1)


def test_writer_is_canonical(tmp_path):
    img = _random_affine_image((1, 6, 5, 4))
    p1, p2 = tmp_path / "a.nii", tmp_path / "b.nii"
    write_image(img, p1)
    write_image(read_image(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()
    g1, g2 = tmp_path / "a.nii.gz", tmp_path / "b.nii.gz"
    write_image(img, g1)
    write_image(read_image(g1), g2)
    assert g1.read_bytes() == g2.read_bytes()


def test_peek_matches_read(cube):
    path, _ = cube
    shape, affine, elem = peek(path)
    img = read_image(path)
    assert shape == img.shape
    assert np.allclose(affine, img.affine)
    assert elem == 4


def test_read_label_kind_mismatch(tmp_path):
    from voxaug.errors import KindMismatch

    arr = np.full((3, 3, 3), 0.5, dtype=np.float32)
    path = tmp_path / "frac.nii"
    path.write_bytes(pack_nifti(arr, sform_rows=IDENTITY_ROWS))
    with pytest.raises(KindMismatch):
        read_image(path, kind=ImageKind.LABEL)
