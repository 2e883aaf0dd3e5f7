"""Exception types shared across the simulator."""


class MergeSimError(Exception):
    """Base class for all simulator errors."""


class MalformedLine(MergeSimError):
    """A scenario file line is not `key = value`."""

    def __init__(self, line_no: int, text: str):
        self.line_no = line_no
        self.text = text
        super().__init__(f"line {line_no}: malformed line: {text!r}")


class UnknownKey(MergeSimError):
    """A scenario file key does not name any configuration field."""

    def __init__(self, name: str, line_no: int | None = None):
        self.name = name
        self.line_no = line_no
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{where}unknown key: {name!r}")


class InvariantViolation(MergeSimError):
    """A configuration value breaks a documented invariant."""

    def __init__(self, key: str, reason: str):
        self.key = key
        self.reason = reason
        super().__init__(f"InvariantViolation: {key}: {reason}")


class MissingTarget(MergeSimError):
    """Consensus control was asked to track a target that is unavailable."""


class NegativeGap(MergeSimError):
    """A car-following gap went negative, i.e. an upstream collision."""


class WrongLane(MergeSimError):
    """A merge-frame projection was requested for a lane that never merges."""


class CollisionDetected(MergeSimError):
    """Two vehicles in the same lane overlap; the run is aborted."""

    def __init__(self, id_a: int, id_b: int, sim_time: float):
        self.id_a = id_a
        self.id_b = id_b
        self.sim_time = sim_time
        super().__init__(
            f"collision between vehicles {id_a} and {id_b} at t={sim_time:.2f} s"
        )


class NonTermination(MergeSimError):
    """The network failed to empty within the diagnostic time limit."""


class IncompleteTrip(MergeSimError):
    """A metric over finished trips was asked for an unfinished trip."""


class ZeroDistance(MergeSimError):
    """Per-mile fuel was requested for a trip that covered no distance."""


class MissingBaseline(MergeSimError):
    """Result aggregation found no 0%-penetration baseline for a demand level."""
