"""Exception hierarchy for the voxaug engine.

Everything raised on purpose derives from :class:`VoxaugError`, so callers
(CLI, HTTP service) can map failures to exit codes / status codes without
enumerating every condition.
"""


class VoxaugError(Exception):
    """Base class for all voxaug errors."""


class IoError(VoxaugError):
    """A file could not be read or written."""


class BadMagic(IoError):
    """File is not a NIfTI-1 single file (bad magic bytes)."""


class TruncatedFile(IoError):
    """File ends before the header or voxel data is complete."""


class UnsupportedDatatype(IoError):
    """NIfTI datatype code outside the supported set."""


class LabelRangeError(VoxaugError):
    """Label values fall outside the lossless on-disk range [0, 32767]."""


class KindMismatch(VoxaugError):
    """Voxel data is incompatible with the declared image kind."""


class SingularAffine(VoxaugError):
    """The 3x3 block of an affine is not invertible."""


class InvalidQuaternion(VoxaugError):
    """Header quaternion has b^2+c^2+d^2 > 1 beyond tolerance."""


class InconsistentSubject(VoxaugError):
    """Subject images disagree in shape or affine where agreement is required."""


class UnknownTransform(VoxaugError):
    """Pipeline references a transform name that is not registered."""


class BadPipeline(VoxaugError):
    """Pipeline JSON is malformed or carries unknown/invalid parameters."""


class ShapeChanged(VoxaugError):
    """A user callable altered the array shape inside a Lambda transform."""


class NonPositiveSpacing(VoxaugError):
    """Requested target spacing is zero or negative."""


class EmptyResult(VoxaugError):
    """Crop bounds would leave no voxels on some axis."""


class AmbiguousOrientation(VoxaugError):
    """Affine direction cosines do not determine a unique axis assignment."""


class DegenerateScale(VoxaugError):
    """A drawn affine scale factor is not strictly positive."""


class ExcessiveDisplacement(VoxaugError):
    """Elastic displacement bound exceeds half the image extent."""


class EmptyMask(VoxaugError):
    """An intensity mask selects no voxels."""


class ZeroVariance(VoxaugError):
    """Masked intensities have zero variance."""


class DegenerateHistogram(VoxaugError):
    """Histogram landmarks collapse (identical low/high percentile)."""


class MissingLabelRange(VoxaugError):
    """A label present in the map has no configured intensity range."""


class NoValidPlacement(VoxaugError):
    """The volume cannot host two disjoint patches of the requested size."""


class PatchTooLarge(VoxaugError):
    """Requested patch size exceeds the volume shape."""


class AllZeroProbability(VoxaugError):
    """Weighted sampling map is zero everywhere inside the valid region."""


class IncompleteCoverage(VoxaugError):
    """Aggregation finalized before all grid locations were received."""


class NotLoaded(VoxaugError):
    """Operation requires voxel data but the image has not been loaded."""


class SubjectPrepareError(VoxaugError):
    """Load/transform/sample failure inside the patch queue, tagged with the subject index."""

    def __init__(self, subject_index: int, cause: BaseException):
        super().__init__(f"subject {subject_index}: {cause}")
        self.subject_index = subject_index
        self.cause = cause

    def __reduce__(self):
        # default exception pickling would replay __init__ with the message
        return (SubjectPrepareError, (self.subject_index, self.cause))
