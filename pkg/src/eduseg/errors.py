"""Exception hierarchy shared across the package."""


class EdusegError(Exception):
    """Base class for all package errors."""


class ShapeError(EdusegError):
    """Tensor or parameter shapes are incompatible."""


class MaskError(EdusegError):
    """A softmax mask leaves no position unmasked."""


class ContractError(EdusegError):
    """A caller violated an operation's contract (e.g. non-scalar loss)."""


class ParseError(EdusegError):
    """A text input file could not be parsed; message carries the line number."""


class ValidationError(EdusegError):
    """Parsed data violates a structural invariant."""


class FormatError(EdusegError):
    """A binary or structured file is not in the expected format."""


class AlignmentError(EdusegError):
    """Contextual representations do not line up with the corpus."""


class ConfigError(EdusegError):
    """Invalid or inconsistent configuration."""


class CheckpointError(EdusegError):
    """Base class for checkpoint load/save failures."""


class ChecksumError(CheckpointError):
    """Checkpoint payload checksum mismatch (corruption)."""


class VersionError(CheckpointError):
    """Checkpoint format version is not supported."""


class UnknownTensorError(CheckpointError):
    """Checkpoint contains or lacks a tensor name the model does not expect."""


class TrainingDiverged(EdusegError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(
            f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}"
        )
