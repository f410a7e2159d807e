"""Transform registrations. Importing this package populates the registry."""

from . import intensity, meta, mri, spatial  # noqa: F401

from .intensity import LandmarkTable, histogram_train  # noqa: F401
from .mri import fft3, ifft3  # noqa: F401
