"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid run configuration or command-line usage."""


class GuardTrip(RuntimeError):
    """A numerical guard fired (step too large, scaling too aggressive, ...).

    ``trajectory_id`` and ``time`` are filled in when the trip happens inside
    a trajectory so the ensemble runner can report where it occurred.
    """

    def __init__(self, message, *, trajectory_id=None, time=None):
        super().__init__(message)
        self.trajectory_id = trajectory_id
        self.time = time

    def __str__(self):
        msg = super().__str__()
        where = []
        if self.trajectory_id is not None:
            where.append(f"trajectory {self.trajectory_id}")
        if self.time is not None:
            where.append(f"t={self.time:.6g}")
        return f"{msg} ({', '.join(where)})" if where else msg


class LeakageError(GuardTrip):
    """Population reached the top of the truncated Fock basis."""


class OracleError(RuntimeError):
    """A reference computation left its domain of validity or broke an invariant."""
