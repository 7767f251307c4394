"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Inconsistent sizes, degrees or options."""


class DataError(ValueError):
    """Non-finite or otherwise unusable numeric input."""


class ChartDomainError(ValueError):
    """A chart quantity was requested at a node masked in that chart."""


class ConformalityError(ValueError):
    """A conformal-parametrization precondition failed.

    Carries the offending sup-norm of F_z . F_z in ``sup_norm``.
    """

    def __init__(self, sup_norm: float):
        self.sup_norm = float(sup_norm)
        super().__init__(
            f"parametrization is not conformal: sup |Fz.Fz| = {sup_norm:.3e}"
        )


class InputError(ValueError):
    """Bad user-facing input (CLI, file formats)."""
