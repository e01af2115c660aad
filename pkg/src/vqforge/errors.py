"""Exception hierarchy.

Every domain error carries a machine-readable ``code`` so the command line
front end can report it as ``CODE: message`` without a traceback.
"""


class VQForgeError(Exception):
    code = "ERROR"


class MediaIOError(VQForgeError, OSError):
    code = "IO_ERROR"


class FormatError(VQForgeError, ValueError):
    code = "FORMAT_ERROR"


class EmptyError(VQForgeError, ValueError):
    code = "EMPTY"


class FrameTooSmall(VQForgeError, ValueError):
    code = "FRAME_TOO_SMALL"


class TooFewFrames(VQForgeError, ValueError):
    code = "TOO_FEW_FRAMES"


class SidecarMismatch(VQForgeError, ValueError):
    code = "SIDECAR_MISMATCH"


class InfeasibleQuotas(VQForgeError, ValueError):
    code = "INFEASIBLE_QUOTAS"


class ExactTooLarge(VQForgeError, ValueError):
    code = "EXACT_TOO_LARGE"


class InfeasibleGeometry(VQForgeError, RuntimeError):
    code = "INFEASIBLE_GEOMETRY"


class BadMeta(VQForgeError, ValueError):
    code = "BAD_META"


class PhaseOrderError(VQForgeError, ValueError):
    code = "PHASE_ORDER"


class MissingGolden(VQForgeError, KeyError):
    code = "MISSING_GOLDEN"

    def __str__(self):
        return Exception.__str__(self)


class TooFew(VQForgeError, ValueError):
    code = "TOO_FEW"


class ZeroVariance(VQForgeError, ValueError):
    code = "ZERO_VARIANCE"


class EmptyTable(VQForgeError, ValueError):
    code = "EMPTY_TABLE"


class LengthMismatch(VQForgeError, ValueError):
    code = "LENGTH_MISMATCH"


class Degenerate(VQForgeError, ValueError):
    code = "DEGENERATE"


class TooFewSubjects(VQForgeError, ValueError):
    code = "TOO_FEW_SUBJECTS"


class NoGoldenData(VQForgeError, ValueError):
    code = "NO_GOLDEN_DATA"


class NoPairs(VQForgeError, ValueError):
    code = "NO_PAIRS"


class BadSpec(VQForgeError, ValueError):
    code = "BAD_SPEC"


class ConfigError(VQForgeError, ValueError):
    code = "CONFIG_ERROR"


class DegenerateFeatureWarning(UserWarning):
    """A reference feature is constant; it is collapsed to a single bin."""
