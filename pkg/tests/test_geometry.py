import numpy as np
import pytest

from voxaug.errors import AmbiguousOrientation, SingularAffine
from voxaug.geometry import (
    as_affine,
    index_to_physical,
    orientation_codes,
    physical_to_index,
    spacing,
)


def hand_product(affine, idx):
    """4x4 matrix-vector product spelled out, as the independent oracle."""
    out = []
    for r in range(3):
        out.append(
            affine[r][0] * idx[0] + affine[r][1] * idx[1] + affine[r][2] * idx[2] + affine[r][3]
        )
    return np.array(out)


def test_identity_maps_origin():
    assert np.allclose(index_to_physical(np.eye(4), (0, 0, 0)), (0, 0, 0))


def test_diagonal_scaling():
    aff = np.diag([2.0, 2.0, 2.0, 1.0])
    assert np.allclose(index_to_physical(aff, (1, 1, 1)), (2, 2, 2))


def test_translation_with_identity_rotation():
    aff = np.eye(4)
    aff[:3, 3] = (10.0, -5.0, 3.0)
    got = index_to_physical(aff, (1, 2, 3))
    assert np.allclose(got, (11.0, -3.0, 6.0))
    assert np.allclose(got, hand_product(aff, (1, 2, 3)))


def test_physical_to_index_trivial():
    assert np.allclose(physical_to_index(np.eye(4), (0, 0, 0)), (0, 0, 0))
    aff = np.diag([2.0, 2.0, 2.0, 1.0])
    assert np.allclose(physical_to_index(aff, (2, 2, 2)), (1, 1, 1))


def test_roundtrip_random_affines():
    rs = np.random.RandomState(0)
    done = 0
    while done < 200:
        aff = np.eye(4)
        aff[:3, :3] = rs.uniform(-2, 2, (3, 3))
        aff[:3, 3] = rs.uniform(-50, 50, 3)
        if abs(np.linalg.det(aff[:3, :3])) <= 1e-6:
            continue
        done += 1
        pts = rs.uniform(-100, 100, (20, 3))
        back = index_to_physical(aff, physical_to_index(aff, pts))
        assert np.max(np.abs(back - pts)) < 1e-9


def test_spacing_anisotropic_ct():
    aff = np.diag([0.66, 0.66, 0.30, 1.0])
    assert np.allclose(spacing(aff), (0.66, 0.66, 0.30))


def test_spacing_identity():
    assert np.allclose(spacing(np.eye(4)), (1, 1, 1))


def test_spacing_invariant_under_rotation():
    theta = np.deg2rad(45.0)
    rot = np.array(
        [
            [np.cos(theta), -np.sin(theta), 0],
            [np.sin(theta), np.cos(theta), 0],
            [0, 0, 1],
        ]
    )
    aff = np.eye(4)
    aff[:3, :3] = rot @ np.diag([2.0, 3.0, 4.0])
    # column-norm oracle
    expected = [np.linalg.norm(aff[:3, c]) for c in range(3)]
    assert np.allclose(expected, (2, 3, 4))
    assert np.allclose(spacing(aff), (2, 3, 4), atol=1e-9)


def test_singular_affine_rejected():
    aff = np.eye(4)
    aff[0, 0] = 0.0
    with pytest.raises(SingularAffine):
        physical_to_index(aff, (1, 1, 1))
    with pytest.raises(SingularAffine):
        as_affine(aff)


def test_bad_last_row_rejected():
    aff = np.eye(4)
    aff[3, 0] = 1.0
    with pytest.raises(ValueError):
        as_affine(aff)


def test_orientation_codes():
    assert orientation_codes(np.eye(4)) == "RAS"
    las = np.diag([-1.0, 1.0, 1.0, 1.0])
    assert orientation_codes(las) == "LAS"
    perm = np.eye(4)[:, [2, 0, 1, 3]]
    perm[3, 3] = 1.0
    assert orientation_codes(as_affine(perm)) == "SRA"


def test_ambiguous_orientation():
    theta = np.deg2rad(45.0)
    aff = np.eye(4)
    aff[:2, :2] = [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
    with pytest.raises(AmbiguousOrientation):
        orientation_codes(aff)
