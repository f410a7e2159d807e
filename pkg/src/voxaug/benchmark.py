"""Patch-queue throughput benchmark.

Builds file-backed synthetic volumes, prepares them through the standard
augmentation pipeline (affine, elastic, bias field, noise), and measures
patches/second for different worker counts. Run as::

    python -m voxaug.benchmark [--subjects 8] [--volume 128] [--patch 64]
                               [--workers 1,4] [--json]
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import leaf, nifti, pipeline
from .image import Image, Subject, SubjectsDataset
from .sampling import QueueConfig, UniformSampler, queue_epoch


def default_pipeline():
    return pipeline(
        leaf("RandomAffine"),
        leaf("RandomElasticDeformation"),
        leaf("RandomBiasField"),
        leaf("RandomNoise"),
    )


def build_synthetic_dataset(directory, num_subjects: int, volume: int) -> SubjectsDataset:
    """Lazy file-backed dataset of smooth random volumes."""
    directory = Path(directory)
    subjects = []
    for i in range(num_subjects):
        path = directory / f"subject{i:03d}.nii"
        if not path.exists():
            rs = np.random.RandomState(i)
            coords = np.linspace(-1, 1, volume)
            gx, gy, gz = np.meshgrid(coords, coords, coords, indexing="ij")
            blob = np.exp(-(gx**2 + gy**2 + gz**2) / 0.5)
            data = (blob + 0.1 * rs.rand(volume, volume, volume)).astype(np.float32)
            nifti.write_image(Image(data=data[np.newaxis]), path)
        subjects.append(Subject({"image": Image(path=path)}))
    return SubjectsDataset(subjects, transform=default_pipeline())


def measure(dataset, patch: int, workers: int, samples_per_volume: int, seed: int) -> dict:
    config = QueueConfig(
        max_length=samples_per_volume * max(2, workers),
        samples_per_volume=samples_per_volume,
        num_workers=workers,
        seed=seed,
    )
    sampler = UniformSampler((patch, patch, patch))
    start = time.perf_counter()
    count = 0
    checksum = 0.0
    for p in queue_epoch(dataset, sampler, config):
        count += 1
        checksum += float(p.subject["image"].data[0, 0, 0, 0])
    duration = time.perf_counter() - start
    return {
        "workers": workers,
        "patches": count,
        "seconds": duration,
        "patches_per_second": count / duration,
        "checksum": checksum,
    }


def run(num_subjects=8, volume=128, patch=64, workers=(1, 4), samples_per_volume=4, seed=0):
    report = {
        "num_subjects": num_subjects,
        "volume": volume,
        "patch": patch,
        "cpu_count": os.cpu_count(),
        "runs": [],
    }
    with tempfile.TemporaryDirectory(prefix="voxaug-bench-") as tmp:
        dataset = build_synthetic_dataset(tmp, num_subjects, volume)
        for w in workers:
            report["runs"].append(measure(dataset, patch, w, samples_per_volume, seed))
    base = report["runs"][0]["patches_per_second"]
    for entry in report["runs"]:
        entry["speedup_vs_first"] = entry["patches_per_second"] / base
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--subjects", type=int, default=8)
    parser.add_argument("--volume", type=int, default=128)
    parser.add_argument("--patch", type=int, default=64)
    parser.add_argument("--samples", type=int, default=4)
    parser.add_argument("--workers", default="1,4", help="comma-separated worker counts")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--json", action="store_true", help="print the report as JSON")
    args = parser.parse_args(argv)
    workers = tuple(int(w) for w in args.workers.split(","))
    report = run(args.subjects, args.volume, args.patch, workers, args.samples, args.seed)
    if args.json:
        print(json.dumps(report, indent=1))
    else:
        print(f"cpu_count={report['cpu_count']} volume={args.volume}^3 patch={args.patch}^3")
        for entry in report["runs"]:
            print(
                f"workers={entry['workers']}: {entry['patches']} patches in "
                f"{entry['seconds']:.2f}s -> {entry['patches_per_second']:.2f} patches/s "
                f"(x{entry['speedup_vs_first']:.2f})"
            )
    return 0


if __name__ == "__main__":
    sys.exit(main())
