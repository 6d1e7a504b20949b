"""Exception types raised across the package."""


class CRDTError(Exception):
    """Base class for all errors raised by movecrdt."""


class MissingDependency(CRDTError):
    """An operation references an OpId that is not in the OpSet."""


class ConflictingDuplicate(CRDTError):
    """Two different operations claim the same OpId."""


class MalformedRecord(CRDTError, ValueError):
    """An op-log record could not be decoded."""


class InvalidOperation(CRDTError, ValueError):
    """An operation is internally inconsistent or references the wrong kind of op."""


class NotAList(CRDTError):
    pass


class NoVisibleValue(CRDTError):
    pass


class InvalidTarget(CRDTError):
    """A local edit names a location that is not visible or has the wrong type."""


class UnknownObject(CRDTError, KeyError):
    pass
