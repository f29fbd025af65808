"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Arguments violate a documented precondition or invariant."""


class GridMismatchError(ValidationError):
    """Two objects that must share a grid do not."""


class EllipticityError(ValidationError):
    """Diffusion coefficient drops below the ellipticity bound; names the node."""

    def __init__(self, x, value, kappa):
        self.x = x
        self.value = value
        self.kappa = kappa
        super().__init__(
            f"hypothesis (i) violated: a({x:.6g}) = {value:.6g} < kappa = {kappa:.6g}"
        )


class SectorialityError(RuntimeError):
    """Resolvent sup diverges on the probed half-plane; suggests a larger shift."""


class ConditioningError(RuntimeError):
    """A linear solve failed or is numerically singular."""


class NumericalMethodError(RuntimeError):
    """A factorization or matrix-function evaluation failed."""


class SolverBlowupError(RuntimeError):
    """Time stepping produced a non-finite state; carries the step index."""

    def __init__(self, step, detail=""):
        self.step = step
        super().__init__(
            f"non-finite state at step {step}"
            + (f": {detail}" if detail else "")
            + " (stiffness or timestep misconfiguration)"
        )


class ContractionError(RuntimeError):
    """Fixed-point iteration failed to contract; advises a shorter horizon."""


class HypothesisViolation(ValidationError):
    """A problem instance breaks one of the audited uniform hypotheses."""

    def __init__(self, hypothesis, witness):
        self.hypothesis = hypothesis
        self.witness = witness
        super().__init__(f"hypothesis {hypothesis} violated: {witness}")


class ConfigError(ValueError):
    """Experiment configuration is malformed; message cites the field."""
