"""Engine-level leaves: the NoOp audit marker and the Lambda escape hatch."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeChanged
from ..pipeline import Param, TransformDef, register


def _noop_apply(subject, params):
    return dict(subject.images), {}


register(
    TransformDef(
        name="NoOp",
        category="meta",
        ui=False,
        params=[],
        apply=_noop_apply,
    )
)


def _lambda_apply(subject, params):
    fn = params["fn"]
    kinds = set(params["kinds"])

    def one(img):
        if img.kind.value not in kinds:
            return img
        out = np.asarray(fn(img.data))
        if out.shape != img.data.shape:
            raise ShapeChanged(
                f"lambda changed shape {img.data.shape} -> {out.shape}"
            )
        return img.with_data(out)

    images = {name: one(img) for name, img in subject.images.items()}
    # the callable stays in the record: replay works in-process, JSON export fails
    return images, dict(params)


register(
    TransformDef(
        name="Lambda",
        category="meta",
        ui=False,
        params=[
            Param("fn", "callable", required=True),
            Param("kinds", "str_list", default=["scalar", "label"]),
        ],
        apply=_lambda_apply,
    )
)
