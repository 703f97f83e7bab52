"""Exception types raised across the package."""


class SchedulingError(Exception):
    """Base class for errors raised by this package."""


class Infeasible(SchedulingError, ValueError):
    """No complete assignment avoids every forbidden cell."""


class UnknownJob(SchedulingError, KeyError):
    """A placement references a job id missing from the job table."""


class NotPlaced(SchedulingError, KeyError):
    """The job does not appear in the placement plan."""


class ShapeMismatch(SchedulingError, ValueError):
    """Two plans (or a plan and a cluster) disagree on node/GPU counts."""


class CapacityExceeded(SchedulingError, ValueError):
    """A GPU slot would host more than ``max_pack`` jobs."""


class MissingEntry(SchedulingError, KeyError):
    """A profile lookup found no entry."""


class MissingIsolatedProfile(MissingEntry):
    """A job's isolated throughput is absent, so normalization is impossible."""


class OutOfMemory(Infeasible):
    """The requested (pair, strategy) combination is marked OOM."""


class NotDataParallel(SchedulingError, ValueError):
    """Linear scaling was requested for a model that is not data-parallel."""


class BudgetComplete(SchedulingError):
    """Every candidate strategy has already been profiled.

    Used as a sentinel by the profiling planner rather than as a failure.
    """


class SimulationError(SchedulingError, RuntimeError):
    """A scheduling round failed; ``round_index`` says which one."""

    def __init__(self, message, round_index=None):
        super().__init__(message)
        self.round_index = round_index
