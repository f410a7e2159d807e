"""voxaug: loading, preprocessing, augmentation and patch sampling of 3D/4D
medical images, with reproducible seeded pipelines.

The public surface re-exports the data model, the pipeline engine, the NIfTI
reader/writer and the patch sampling machinery. Importing the package
registers all built-in transforms.
"""

from .errors import VoxaugError  # noqa: F401
from .geometry import (  # noqa: F401
    index_to_physical,
    orientation_codes,
    physical_to_index,
    spacing,
)
from .image import (  # noqa: F401
    Image,
    ImageKind,
    Subject,
    SubjectsDataset,
    check_consistency,
    memory_footprint,
)
from .nifti import read_image, write_image  # noqa: F401
from .pipeline import (  # noqa: F401
    AppliedTransform,
    Compose,
    Leaf,
    OneOf,
    apply,
    history_as_pipeline,
    invert_history,
    lambda_transform,
    leaf,
    load_pipeline,
    one_of,
    parse_pipeline,
    pipeline,
    pipeline_to_json,
    schema,
)
from .rng import Rng, seed_for  # noqa: F401
from . import transforms  # noqa: F401  (registers all built-in transforms)
from .sampling import (  # noqa: F401
    GridAggregator,
    Patch,
    PatchLocation,
    QueueConfig,
    grid_locations,
    queue_epoch,
    uniform_sample,
    weighted_sample,
)
from .transforms import LandmarkTable, fft3, histogram_train, ifft3  # noqa: F401

__version__ = "0.1.0"
