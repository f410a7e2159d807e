"""Command-line interface: apply / info / sample / serve.

Thin wrapper over the library; exit codes are 1 for I/O problems, 2 for a
bad pipeline, 3 for transform/sampling errors. The seed defaults to 0 and is
echoed to stderr so any run can be reproduced after the fact.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import nifti
from .errors import BadPipeline, IoError, UnknownTransform, VoxaugError
from .geometry import orientation_codes
from .image import Image, ImageKind, Subject, memory_footprint
from .pipeline import apply, history_as_pipeline, load_pipeline, pipeline_to_json
from .png import render_slice
from .rng import Rng
from .sampling import uniform_sample

EXIT_IO = 1
EXIT_PIPELINE = 2
EXIT_TRANSFORM = 3


def _parse_triple(text: str, name: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise BadPipeline(f"{name} must be three comma-separated integers, got {text!r}")
    return tuple(int(p) for p in parts)


def cmd_apply(args) -> int:
    seed = args.seed if args.seed is not None else 0
    print(f"seed: {seed}", file=sys.stderr)
    spec = load_pipeline(args.pipeline)
    image = nifti.read_image(args.input, kind=ImageKind(args.kind))
    subject = Subject({"image": image})
    out = apply(spec, subject, Rng(seed))
    nifti.write_image(out["image"], args.output)
    if args.history_out:
        history = pipeline_to_json(history_as_pipeline(out))
        Path(args.history_out).write_text(json.dumps(history, indent=1))
    if args.slice_out:
        axis, index = (int(v) for v in args.slice.split(","))
        Path(args.slice_out).write_bytes(render_slice(out["image"], axis, index))
    return 0


def cmd_info(args) -> int:
    image = Image(path=args.input)
    c, x, y, z = image.shape
    print(f"shape: {c} x {x} x {y} x {z} (C, X, Y, Z)")
    sp = image.spacing
    print(f"spacing: {sp[0]:.6g} x {sp[1]:.6g} x {sp[2]:.6g} mm")
    print(f"orientation: {orientation_codes(image.affine)}")
    print(f"memory footprint: {memory_footprint(image)} bytes")
    try:
        data = image.load().data.astype(np.float64)
        print(f"intensity min/max/mean: {data.min():.6g} / {data.max():.6g} / {data.mean():.6g}")
    except VoxaugError:
        print("intensity min/max/mean: unavailable (voxel data not readable)")
    return 0


def cmd_sample(args) -> int:
    seed = args.seed if args.seed is not None else 0
    print(f"seed: {seed}", file=sys.stderr)
    patch_size = _parse_triple(args.patch, "--patch")
    image = nifti.read_image(args.input)
    subject = Subject({"image": image})
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rng = Rng(seed)
    stem = Path(args.input).name.replace(".nii.gz", "").replace(".nii", "")
    for i in range(args.count):
        patch = uniform_sample(subject, patch_size, rng)
        nifti.write_image(patch.subject["image"], outdir / f"{stem}_patch{i:03d}.nii.gz")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(max_volumes=args.max_volumes, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxaug", description="medical image augmentation engine"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_apply = sub.add_parser("apply", help="apply a pipeline to an image file")
    p_apply.add_argument("input")
    p_apply.add_argument("output")
    p_apply.add_argument("--pipeline", required=True, help="pipeline JSON file")
    p_apply.add_argument("--seed", type=int, default=None)
    p_apply.add_argument("--history-out", default=None, help="write resolved history JSON")
    p_apply.add_argument("--kind", choices=["scalar", "label"], default="scalar")
    p_apply.add_argument("--slice", default="2,0", help="AXIS,INDEX for --slice-out")
    p_apply.add_argument("--slice-out", default=None, help="export one slice as PNG")
    p_apply.set_defaults(fn=cmd_apply)

    p_info = sub.add_parser("info", help="print header and intensity summary")
    p_info.add_argument("input")
    p_info.set_defaults(fn=cmd_info)

    p_sample = sub.add_parser("sample", help="write uniformly sampled patches")
    p_sample.add_argument("input")
    p_sample.add_argument("--patch", required=True, help="X,Y,Z patch size")
    p_sample.add_argument("-n", dest="count", type=int, default=1)
    p_sample.add_argument("--seed", type=int, default=None)
    p_sample.add_argument("--outdir", required=True)
    p_sample.set_defaults(fn=cmd_sample)

    p_serve = sub.add_parser("serve", help="run the HTTP preview service")
    p_serve.add_argument("--port", type=int, default=8642)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--max-volumes", type=int, default=4)
    p_serve.add_argument("--ui-dir", default=None, help="static playground directory")
    p_serve.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (BadPipeline, UnknownTransform) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PIPELINE
    except IoError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except VoxaugError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_TRANSFORM
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
