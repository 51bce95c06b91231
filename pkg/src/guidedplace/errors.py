"""Exception hierarchy shared by every subsystem.

Data problems (bad files, broken netlists) derive from :class:`DataError`;
numerical failures derive from :class:`NumericError`.  The CLI maps the two
families onto distinct exit codes.
"""


class PlacementError(Exception):
    pass


class DataError(PlacementError):
    pass


class NumericError(PlacementError):
    pass


class NetlistError(DataError):
    pass


class BookshelfSyntaxError(NetlistError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class DanglingPinReference(NetlistError):
    def __init__(self, node, net=None):
        self.node = node
        self.net = net
        where = f" in net {net!r}" if net is not None else ""
        super().__init__(f"pin references undeclared node {node!r}{where}")


class ShapeMismatch(DataError, ValueError):
    pass


class DegenerateCanvas(DataError, ValueError):
    pass


class ScheduleMismatch(DataError):
    pass


class CheckpointError(DataError):
    pass


class IoError(DataError, OSError):
    """An output file or directory could not be written."""


class NonFiniteInput(NumericError, ValueError):
    pass


class InvalidScheduleParams(NumericError, ValueError):
    pass


class TimestepOutOfRange(NumericError, IndexError):
    pass


class NonConvergence(NumericError):
    pass


class NonFiniteLoss(NumericError):
    pass


class NonFiniteState(NumericError):
    def __init__(self, t, message="non-finite sampler state"):
        self.t = t
        super().__init__(f"{message} at t={t}")
