"""Cross-cutting engine properties: every random transform replays
bit-exactly from its recorded history, inverses of the invertible set
restore geometry exactly, and reorientation round-trips for all 48
axis/flip combinations."""

import itertools
import json

import numpy as np
import pytest

import voxaug as vx
from voxaug.rng import Rng


def rich_subject(n=16, seed=0):
    rs = np.random.RandomState(seed)
    labels = np.zeros((1, n, n, n), dtype=np.int16)
    labels[0, n // 2 :, :, :] = 1
    labels[0, :, : n // 3, :] = 2
    return vx.Subject(
        {
            "mri": vx.Image(data=(rs.rand(1, n, n, n) * 50 + 5).astype(np.float32)),
            "seg": vx.Image(data=labels, kind=vx.ImageKind.LABEL),
        }
    )


HIST_TABLE_PERCENTILES = [1.0, 25.0, 50.0, 75.0, 99.0]
HIST_TABLE_VALUES = [0.0, 30.0, 55.0, 80.0, 100.0]

RANDOM_LEAVES = [
    vx.leaf("RandomFlip", axes=[0, 1, 2], p=0.7),
    vx.leaf("RandomAffine"),
    vx.leaf("RandomElasticDeformation", max_displacement=3.0),
    vx.leaf("RandomAnisotropy"),
    vx.leaf("RandomNoise"),
    vx.leaf("RandomBlur"),
    vx.leaf("RandomGamma"),
    vx.leaf("RandomSwap", patch_size=(4, 4, 4), num_iterations=6),
    vx.leaf(
        "RandomLabelsToImage",
        label_image="seg",
        mean_ranges={"0": [0, 1], "1": [2, 3], "2": [4, 5]},
        std_ranges={"0": [0, 0.1], "1": [0, 0.1], "2": [0, 0.1]},
    ),
    vx.leaf("RandomSpike"),
    vx.leaf("RandomGhosting"),
    vx.leaf("RandomMotion", num_transforms=1),
    vx.leaf("RandomBiasField"),
]

DETERMINISTIC_LEAVES = [
    vx.leaf("ToCanonical"),
    vx.leaf("Resample", spacing=(2.0, 2.0, 2.0)),
    vx.leaf("Crop", low=(1, 2, 0), high=(2, 0, 1)),
    vx.leaf("Pad", low=(2, 1, 0), high=(0, 1, 2)),
    vx.leaf("CropOrPad", shape=(13, 19, 16)),
    vx.leaf("RescaleIntensity", out_range=(0, 1)),
    vx.leaf("ZNormalization"),
    vx.leaf(
        "HistogramStandardization",
        percentiles=HIST_TABLE_PERCENTILES,
        standard_values=HIST_TABLE_VALUES,
    ),
]


@pytest.mark.parametrize(
    "node", RANDOM_LEAVES + DETERMINISTIC_LEAVES, ids=lambda n: n.name
)
def test_history_replay_is_bit_exact(node):
    subject = rich_subject()
    out = vx.apply(vx.pipeline(node), subject, Rng(91))
    assert len(out.history) == 1
    # replay through the in-memory history
    replay = vx.apply(vx.history_as_pipeline(out), subject, Rng(12345))
    for name in out.image_names:
        assert np.array_equal(out[name].data, replay[name].data), name
        assert np.array_equal(out[name].affine, replay[name].affine), name
    # and through the serialized JSON form
    blob = json.dumps(vx.pipeline_to_json(vx.history_as_pipeline(out)))
    replay2 = vx.apply(vx.parse_pipeline(blob), subject, Rng(999))
    for name in out.image_names:
        assert np.array_equal(out[name].data, replay2[name].data), name


EXACT_INVERTIBLE = [
    vx.leaf("Flip", axes=[0, 2]),
    vx.leaf("Pad", low=(2, 1, 0), high=(0, 1, 2)),
    vx.leaf("ToCanonical"),
    vx.leaf("Reorient", permutation=[1, 2, 0], flips=[1]),
]


@pytest.mark.parametrize("node", EXACT_INVERTIBLE, ids=lambda n: n.name)
def test_exact_inverses_restore_everything(node):
    subject = rich_subject()
    out = vx.apply(vx.pipeline(node), subject, Rng(3))
    inverse, discarded = vx.invert_history(out)
    assert discarded == 0
    back = vx.apply(inverse, out, Rng(0))
    for name in subject.image_names:
        assert np.array_equal(back[name].data, subject[name].data), name
        assert np.allclose(back[name].affine, subject[name].affine, atol=1e-9), name


def test_crop_inverse_restores_geometry_zero_fills_lost():
    subject = rich_subject()
    out = vx.apply(vx.pipeline(vx.leaf("Crop", low=(2, 1, 0), high=(1, 2, 3))), subject, Rng(0))
    inverse, _ = vx.invert_history(out)
    back = vx.apply(inverse, out, Rng(0))
    assert back["mri"].spatial_shape == subject["mri"].spatial_shape
    assert np.allclose(back["mri"].affine, subject["mri"].affine, atol=1e-9)
    interior = (slice(None), slice(2, 15), slice(1, 14), slice(0, 13))
    assert np.array_equal(back["mri"].data[interior], subject["mri"].data[interior])


def test_resample_inverse_restores_grid():
    subject = rich_subject()
    out = vx.apply(vx.pipeline(vx.leaf("Resample", spacing=(2.0, 2.0, 2.0))), subject, Rng(0))
    inverse, discarded = vx.invert_history(out)
    assert discarded == 0
    back = vx.apply(inverse, out, Rng(0))
    assert back["mri"].spatial_shape == subject["mri"].spatial_shape
    assert np.allclose(back["mri"].affine, subject["mri"].affine, atol=1e-9)


def test_crop_or_pad_inverse_random_sweep():
    rs = np.random.RandomState(4)
    for trial in range(10):
        n = int(rs.randint(6, 14))
        subject = vx.Subject(
            {"img": vx.Image(data=rs.rand(1, n, n, n).astype(np.float32))}
        )
        target = tuple(int(v) for v in rs.randint(3, 18, size=3))
        out = vx.apply(vx.pipeline(vx.leaf("CropOrPad", shape=target)), subject, Rng(trial))
        assert out["img"].spatial_shape == target
        inverse, _ = vx.invert_history(out)
        back = vx.apply(inverse, out, Rng(0))
        assert back["img"].spatial_shape == (n, n, n)
        assert np.allclose(back["img"].affine, subject["img"].affine, atol=1e-9)


def all_signed_permutation_affines():
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            m = np.zeros((4, 4))
            m[3, 3] = 1.0
            for new_axis, old_axis in enumerate(perm):
                m[old_axis, new_axis] = signs[new_axis]
            m[:3, 3] = (3.0, -2.0, 5.0)
            yield m


def test_to_canonical_all_48_orientations():
    rs = np.random.RandomState(5)
    data = rs.rand(1, 4, 5, 6).astype(np.float32)
    for affine in all_signed_permutation_affines():
        # shape must match the data (axes permute under the affine)
        subject = vx.Subject({"img": vx.Image(data=data, affine=affine)})
        out = vx.apply(vx.pipeline(vx.leaf("ToCanonical")), subject, Rng(0))
        img = out["img"]
        assert vx.orientation_codes(img.affine) == "RAS"
        # every voxel keeps its physical position: compare a probe set
        for idx in [(0, 0, 0), (1, 2, 3), (3, 4, 5)]:
            p_old = vx.index_to_physical(affine, idx)
            new_idx = vx.physical_to_index(img.affine, p_old)
            rounded = tuple(int(round(v)) for v in new_idx)
            assert np.allclose(new_idx, rounded, atol=1e-9)
            assert img.data[0][rounded] == data[0][idx]


def test_reorient_inverse_all_48_combinations():
    rs = np.random.RandomState(6)
    data = rs.rand(1, 4, 5, 6).astype(np.float32)
    subject = vx.Subject({"img": vx.Image(data=data)})
    for perm in itertools.permutations(range(3)):
        for k in range(3):
            for flips in itertools.combinations(range(3), k):
                node = vx.leaf("Reorient", permutation=list(perm), flips=list(flips))
                out = vx.apply(vx.pipeline(node), subject, Rng(0))
                inverse, _ = vx.invert_history(out)
                back = vx.apply(inverse, out, Rng(0))
                assert np.array_equal(back["img"].data, data), (perm, flips)
                assert np.allclose(back["img"].affine, np.eye(4), atol=1e-12), (perm, flips)


TWO_D_SAFE = [
    vx.leaf("RandomFlip", axes=[0, 1], p=1.0),
    vx.leaf("RandomAffine", degrees=(0, 0)),
    vx.leaf("RandomElasticDeformation", num_control_points=(5, 5, 4), max_displacement=2.0),
    vx.leaf("RandomAnisotropy", axes=[0, 1]),
    vx.leaf("RandomNoise"),
    vx.leaf("RandomBlur"),
    vx.leaf("RandomGamma"),
    vx.leaf("RandomSpike"),
    vx.leaf("RandomGhosting", axes=[0, 1]),
    vx.leaf("RandomMotion", num_transforms=1, axes=[0, 1]),
    vx.leaf("RandomBiasField"),
    vx.leaf("RescaleIntensity"),
    vx.leaf("ZNormalization"),
    vx.leaf("ToCanonical"),
    vx.leaf("CropOrPad", shape=(24, 24, 1)),
]


@pytest.mark.parametrize("node", TWO_D_SAFE, ids=lambda n: n.name)
def test_2d_images_supported(node):
    rs = np.random.RandomState(7)
    subject = vx.Subject(
        {"img": vx.Image(data=(rs.rand(1, 20, 20, 1) * 10).astype(np.float32))}
    )
    out = vx.apply(vx.pipeline(node), subject, Rng(2))
    assert out["img"].data.ndim == 4
    assert out["img"].spatial_shape[2] in (1, out["img"].spatial_shape[2])
    assert np.all(np.isfinite(out["img"].data))


MULTICHANNEL = [
    vx.leaf("RandomFlip", axes=[0, 1, 2], p=1.0),
    vx.leaf("RandomAffine"),
    vx.leaf("RandomElasticDeformation", max_displacement=2.0),
    vx.leaf("RandomNoise"),
    vx.leaf("RandomBlur"),
    vx.leaf("RandomSpike"),
    vx.leaf("RandomGhosting"),
    vx.leaf("RandomBiasField"),
    vx.leaf("RescaleIntensity"),
    vx.leaf("Resample", spacing=(2.0, 2.0, 2.0)),
]


@pytest.mark.parametrize("node", MULTICHANNEL, ids=lambda n: n.name)
def test_multichannel_images_supported(node):
    rs = np.random.RandomState(8)
    subject = vx.Subject(
        {"img": vx.Image(data=(rs.rand(3, 10, 10, 10) * 10).astype(np.float32))}
    )
    out = vx.apply(vx.pipeline(node), subject, Rng(4))
    assert out["img"].num_channels == 3
    assert np.all(np.isfinite(out["img"].data))
