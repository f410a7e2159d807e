import json

import numpy as np
import pytest

import voxaug as vx
from voxaug import nifti
from voxaug.cli import main
from voxaug.geometry import physical_to_index


@pytest.fixture
def workspace(tmp_path):
    rs = np.random.RandomState(0)
    img = vx.Image(data=(rs.rand(1, 10, 10, 10) * 50).astype(np.float32))
    src = tmp_path / "input.nii"
    nifti.write_image(img, src)
    identity = tmp_path / "identity.json"
    identity.write_text(json.dumps({"type": "compose", "children": []}))
    noisy = tmp_path / "noisy.json"
    noisy.write_text(
        json.dumps(
            {
                "type": "compose",
                "children": [
                    {"type": "leaf", "name": "RandomAffine", "params": {}},
                    {"type": "leaf", "name": "RandomNoise", "params": {"std": [0.0, 0.2]}},
                ],
            }
        )
    )
    return tmp_path, src, identity, noisy


def test_apply_identity(workspace):
    tmp, src, identity, _ = workspace
    out = tmp / "out.nii"
    assert main(["apply", str(src), str(out), "--pipeline", str(identity)]) == 0
    a = nifti.read_image(src)
    b = nifti.read_image(out)
    assert np.array_equal(a.data, b.data)


def test_apply_same_seed_byte_identical(workspace):
    tmp, src, _, noisy = workspace
    out1, out2 = tmp / "o1.nii", tmp / "o2.nii"
    assert main(["apply", str(src), str(out1), "--pipeline", str(noisy), "--seed", "9"]) == 0
    assert main(["apply", str(src), str(out2), "--pipeline", str(noisy), "--seed", "9"]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    out3 = tmp / "o3.nii"
    assert main(["apply", str(src), str(out3), "--pipeline", str(noisy), "--seed", "10"]) == 0
    assert out1.read_bytes() != out3.read_bytes()


def test_apply_default_seed_announced(workspace, capsys):
    tmp, src, identity, _ = workspace
    out = tmp / "out.nii"
    assert main(["apply", str(src), str(out), "--pipeline", str(identity)]) == 0
    assert "seed: 0" in capsys.readouterr().err


def test_apply_history_replay(workspace):
    tmp, src, _, noisy = workspace
    out1, out2 = tmp / "o1.nii", tmp / "o2.nii"
    hist = tmp / "history.json"
    assert (
        main(
            [
                "apply", str(src), str(out1),
                "--pipeline", str(noisy), "--seed", "4", "--history-out", str(hist),
            ]
        )
        == 0
    )
    # the history file is itself a valid pipeline and replays bit-exactly
    assert main(["apply", str(src), str(out2), "--pipeline", str(hist), "--seed", "77"]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_apply_exit_codes(workspace, tmp_path):
    tmp, src, identity, _ = workspace
    bad_json = tmp / "bad.json"
    bad_json.write_text("{nope")
    out = tmp / "out.nii"
    assert main(["apply", str(src), str(out), "--pipeline", str(bad_json)]) == 2
    assert main(["apply", str(tmp / "missing.nii"), str(out), "--pipeline", str(identity)]) == 1
    crop_too_much = tmp / "crop.json"
    crop_too_much.write_text(
        json.dumps(
            {
                "type": "leaf",
                "name": "Crop",
                "params": {"low": [6, 0, 0], "high": [6, 0, 0]},
            }
        )
    )
    assert main(["apply", str(src), str(out), "--pipeline", str(crop_too_much)]) == 3


def test_info_output(workspace, capsys):
    _, src, _, _ = workspace
    assert main(["info", str(src)]) == 0
    text = capsys.readouterr().out
    assert "shape: 1 x 10 x 10 x 10" in text
    assert "spacing: 1 x 1 x 1 mm" in text
    assert "orientation: RAS" in text
    assert f"memory footprint: {10 * 10 * 10 * 4} bytes" in text
    assert "intensity min/max/mean" in text


def test_info_missing_file(tmp_path):
    assert main(["info", str(tmp_path / "none.nii")]) == 1


def test_sample_whole_volume(workspace):
    tmp, src, _, _ = workspace
    outdir = tmp / "patches"
    assert main(
        ["sample", str(src), "--patch", "10,10,10", "-n", "1", "--outdir", str(outdir)]
    ) == 0
    files = sorted(outdir.glob("*.nii.gz"))
    assert len(files) == 1
    patch = nifti.read_image(files[0])
    original = nifti.read_image(src)
    assert np.array_equal(patch.data, original.data)


def test_sample_patches_match_source(workspace):
    tmp, src, _, _ = workspace
    outdir = tmp / "patches5"
    assert main(
        ["sample", str(src), "--patch", "4,4,4", "-n", "5", "--seed", "3", "--outdir", str(outdir)]
    ) == 0
    files = sorted(outdir.glob("*.nii.gz"))
    assert len(files) == 5
    source = nifti.read_image(src)
    for f in files:
        patch = nifti.read_image(f)
        # recover the origin from the location-adjusted affine
        origin = physical_to_index(source.affine, patch.affine[:3, 3])
        o = tuple(int(round(v)) for v in origin)
        crop = source.data[:, o[0] : o[0] + 4, o[1] : o[1] + 4, o[2] : o[2] + 4]
        assert np.array_equal(patch.data, crop)


def test_sample_oversize_patch(workspace):
    tmp, src, _, _ = workspace
    assert main(
        ["sample", str(src), "--patch", "11,11,11", "--outdir", str(tmp / "x")]
    ) == 3


def test_info_footprint_from_header_only_fixture(tmp_path, capsys):
    # lung-CT-sized header with no voxel payload: footprint must still print
    from oracles import pack_nifti_header

    fixture = tmp_path / "lung.nii"
    fixture.write_bytes(
        pack_nifti_header((512, 512, 1069), datatype=16, pixdim=(0.66, 0.66, 0.30))
    )
    assert main(["info", str(fixture)]) == 0
    text = capsys.readouterr().out
    assert "memory footprint: 1120927744 bytes" in text
    assert "spacing: 0.66 x 0.66 x 0.3 mm" in text
    assert "unavailable" in text


def test_apply_label_kind_uses_nearest(tmp_path):
    rs = np.random.RandomState(5)
    labels = rs.randint(0, 4, (1, 8, 8, 8)).astype(np.int16)
    src = tmp_path / "seg.nii"
    nifti.write_image(vx.Image(data=labels, kind=vx.ImageKind.LABEL), src)
    spec = tmp_path / "affine.json"
    spec.write_text(
        json.dumps({"type": "leaf", "name": "RandomAffine", "params": {"degrees": [-15, 15]}})
    )
    out = tmp_path / "seg_out.nii"
    assert main(["apply", str(src), str(out), "--pipeline", str(spec), "--kind", "label"]) == 0
    back = nifti.read_image(out, kind=vx.ImageKind.LABEL)
    # nearest-neighbor interpolation: no new label values can appear
    assert set(np.unique(back.data)) <= set(np.unique(labels)) | {0}
