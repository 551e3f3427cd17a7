"""prcmark: frame-wise PRC watermarking of Gaussian video latents."""

from .errors import (
    DimensionError,
    DuplicateCollision,
    FormatError,
    InvalidConfig,
    InvalidParams,
    InvalidSpec,
    LengthError,
    PrcmarkError,
    ShapeMismatch,
)
from .prc import (
    DecodeOutcome,
    PrcKey,
    PrcParams,
    decode,
    detect_zero_bit,
    encode,
    keygen,
)

__version__ = "0.1.0"
