"""Independent oracles shared by test modules.

These are deliberately written against public documentation (NIfTI-1 field
offsets, DFT definition), not against the library under test.
"""

import struct

import numpy as np

DTYPES = {2: np.uint8, 4: np.int16, 8: np.int32, 16: np.float32, 64: np.float64}
BITPIX = {2: 8, 4: 16, 8: 32, 16: 32, 64: 64}


def pack_nifti_header(
    dims,
    order="<",
    datatype=16,
    pixdim=(1.0, 1.0, 1.0, 1.0),
    sform_rows=None,
    qform=None,
    slope=0.0,
    inter=0.0,
    vox_offset=352,
    magic=b"n+1\x00",
    sizeof_hdr=348,
):
    """348-byte NIfTI-1 header built field by field at explicit offsets."""
    dims = list(dims)
    ndim = len(dims)
    hdr = bytearray(348)
    struct.pack_into(order + "i", hdr, 0, sizeof_hdr)
    dim = [ndim] + dims + [1] * (7 - ndim)
    struct.pack_into(order + "8h", hdr, 40, *dim)
    struct.pack_into(order + "h", hdr, 70, datatype)
    struct.pack_into(order + "h", hdr, 72, BITPIX.get(datatype, 24))
    pd = [1.0] + list(pixdim)[:7]
    pd += [0.0] * (8 - len(pd))
    if qform is not None and "qfac" in qform:
        pd[0] = qform["qfac"]
    struct.pack_into(order + "8f", hdr, 76, *pd)
    struct.pack_into(order + "f", hdr, 108, float(vox_offset))
    struct.pack_into(order + "f", hdr, 112, slope)
    struct.pack_into(order + "f", hdr, 116, inter)
    if qform is not None:
        struct.pack_into(order + "h", hdr, 252, 1)
        struct.pack_into(order + "3f", hdr, 256, qform["b"], qform["c"], qform["d"])
        struct.pack_into(order + "3f", hdr, 268, *qform.get("offset", (0.0, 0.0, 0.0)))
    if sform_rows is not None:
        struct.pack_into(order + "h", hdr, 254, 1)
        struct.pack_into(order + "4f", hdr, 280, *sform_rows[0])
        struct.pack_into(order + "4f", hdr, 296, *sform_rows[1])
        struct.pack_into(order + "4f", hdr, 312, *sform_rows[2])
    hdr[344:348] = magic
    return bytes(hdr)


def pack_nifti(arr, order="<", datatype=16, vox_offset=352, **kwargs):
    """Full NIfTI-1 byte stream: oracle header + Fortran-order voxel bytes."""
    arr = np.asarray(arr)
    body = pack_nifti_header(
        arr.shape, order=order, datatype=datatype, vox_offset=vox_offset, **kwargs
    )
    body += b"\x00" * (vox_offset - 348)
    body += arr.astype(np.dtype(DTYPES[datatype]).newbyteorder(order), copy=False).tobytes(
        order="F"
    )
    return body


def naive_dft3(x):
    """O(N^2)-per-axis DFT with explicit exponentials, zero frequency rolled
    to the array center."""
    x = np.asarray(x, dtype=np.complex128)
    for axis in range(3):
        n = x.shape[axis]
        j = np.arange(n)
        mat = np.exp(-2j * np.pi * np.outer(j, j) / n)
        x = np.moveaxis(np.tensordot(mat, np.moveaxis(x, axis, 0), axes=(1, 0)), 0, axis)
    for axis in range(3):
        x = np.roll(x, x.shape[axis] // 2, axis=axis)
    return x
