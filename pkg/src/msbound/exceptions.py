"""Exception and warning types raised by msbound."""


class MsbError(Exception):
    """Base class for all msbound errors."""


class ScenarioError(MsbError, ValueError):
    """Malformed model, channel, or scenario description."""


class NotReachable(MsbError):
    """The orthogonal subsystem is not reachable in at most d2 steps."""


class RankDeficient(MsbError, ValueError):
    """A matrix that must have full row rank does not."""


class ZeroMeanComponent(MsbError, ValueError):
    """A channel component has zero mean, so it cannot be compensated."""


class InfeasiblePolicy(MsbError):
    """A planner was called with parameters that failed feasibility checks."""


class AdmissibilityViolation(MsbError):
    """A planned control left the admissible ball ``||u|| <= Umax``."""


class PhaseDesync(MsbError):
    """Controller called with a time index that disagrees with its phase."""


class ProbeInsideLevelSet(MsbError, ValueError):
    """A drift probe lies inside ``{||x2|| <= J}``."""


class NonConvergenceWarning(RuntimeWarning):
    """Power iteration hit its iteration cap before reaching tolerance."""
