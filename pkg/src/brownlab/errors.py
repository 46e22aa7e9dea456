"""Exception hierarchy shared by every module.

Config problems and numerical failures are separated so the command line
front end can map them onto distinct exit codes.
"""


class BrownlabError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(BrownlabError, ValueError):
    """Malformed operator document, flag or parameter."""


class NumericalFailure(BrownlabError, ArithmeticError):
    """A computation could not produce a trustworthy number."""


class DispatchToClosedForm(BrownlabError):
    """The requested object only exists through a closed-form evaluator."""


class DivergentIntegral(NumericalFailure):
    """An inverse moment is +infinity (zero is an atom of the singular law)."""


class NegativeInfinity(NumericalFailure):
    """A log-determinant equals minus infinity."""


class PoleOnContour(NumericalFailure):
    """A Cauchy transform was requested on the support of the measure."""


class BracketFailure(NumericalFailure):
    """Monotone bracketing failed, which means the measure is inconsistent."""


class NonConvergence(NumericalFailure):
    """An iteration exhausted its budget."""


class StencilOutsideDomain(NumericalFailure):
    """A finite-difference stencil left the region where the formula holds."""


class SingularPushforward(NumericalFailure):
    """The pushforward map has a (numerically) vanishing Jacobian."""


class EnvelopeFailure(NumericalFailure):
    """Rejection sampling accepted too few proposals."""


class OutsideUt(NumericalFailure):
    """The point is not in the open set where v_t is positive."""


class GammaEqualsT(NumericalFailure):
    """The twisted elliptic map is degenerate because gamma equals t."""


class OutsideImage(NumericalFailure):
    """The point is not in the image of the pushforward map."""


class OutsideAnnulus(NumericalFailure):
    """A closed-form annulus formula was evaluated off its annulus."""


class QrStagnation(NumericalFailure):
    """The eigenvalue iteration did not deflate."""
