"""Affine geometry: voxel index <-> physical RAS+ millimeter coordinates.

An image affine is a 4x4 float64 matrix mapping homogeneous voxel indices
``[i, j, k, 1]`` to physical RAS+ coordinates in mm. The last row must be
exactly ``[0, 0, 0, 1]`` and the upper-left 3x3 block must be invertible.
"""

from __future__ import annotations

import numpy as np

from .errors import AmbiguousOrientation, SingularAffine

DET_EPS = 1e-12

# letter per physical axis, positive / negative direction
_AXIS_LETTERS = (("R", "L"), ("A", "P"), ("S", "I"))


def as_affine(m) -> np.ndarray:
    """Validate and return a 4x4 float64 affine."""
    a = np.asarray(m, dtype=np.float64)
    if a.shape != (4, 4):
        raise ValueError(f"affine must be 4x4, got {a.shape}")
    if not np.array_equal(a[3], [0.0, 0.0, 0.0, 1.0]):
        raise ValueError("affine last row must be exactly [0, 0, 0, 1]")
    if abs(np.linalg.det(a[:3, :3])) <= DET_EPS:
        raise SingularAffine("3x3 block of affine is singular")
    return a


def index_to_physical(affine: np.ndarray, index) -> np.ndarray:
    """Map voxel indices to physical mm. Accepts one triple or an (N, 3) array."""
    idx = np.asarray(index, dtype=np.float64)
    return idx @ affine[:3, :3].T + affine[:3, 3]


def physical_to_index(affine: np.ndarray, point) -> np.ndarray:
    """Inverse of index_to_physical. Raises SingularAffine when not invertible."""
    block = affine[:3, :3]
    if abs(np.linalg.det(block)) <= DET_EPS:
        raise SingularAffine("3x3 block of affine is singular")
    pts = np.asarray(point, dtype=np.float64) - affine[:3, 3]
    return pts @ np.linalg.inv(block).T


def spacing(affine: np.ndarray) -> np.ndarray:
    """Voxel spacing in mm: Euclidean norm of each spatial column."""
    return np.linalg.norm(affine[:3, :3], axis=0)


def assign_axes(affine: np.ndarray) -> tuple[list[int], list[int]]:
    """Assign each data axis to the closest physical axis.

    Returns (assignment, signs): data axis j corresponds to physical axis
    ``assignment[j]`` with direction ``signs[j]`` (+1/-1). Raises
    AmbiguousOrientation when a column's top two |components| tie within 1e-9
    or two columns claim the same physical axis.
    """
    cols = affine[:3, :3] / spacing(affine)
    assignment: list[int] = []
    signs: list[int] = []
    for j in range(3):
        col = np.abs(cols[:, j])
        order = np.argsort(col)[::-1]
        if col[order[0]] - col[order[1]] < 1e-9:
            raise AmbiguousOrientation(
                f"data axis {j}: direction cosines tie between physical axes "
                f"{order[0]} and {order[1]}"
            )
        r = int(order[0])
        assignment.append(r)
        signs.append(1 if cols[r, j] > 0 else -1)
    if len(set(assignment)) != 3:
        raise AmbiguousOrientation(f"two data axes map to one physical axis: {assignment}")
    return assignment, signs


def orientation_codes(affine: np.ndarray) -> str:
    """Three-letter orientation of the data axes, e.g. 'RAS' for identity."""
    assignment, signs = assign_axes(affine)
    return "".join(
        _AXIS_LETTERS[r][0 if s > 0 else 1] for r, s in zip(assignment, signs)
    )
