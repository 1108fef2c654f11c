"""Exception types shared across the toolkit."""


class AsdError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(AsdError, ValueError):
    """A precondition on user-supplied data was violated."""


class DataError(AsdError):
    """A dataset, file, or directory could not be read or is malformed."""


class TrainingDivergedError(AsdError):
    """A training run produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int, loss):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
