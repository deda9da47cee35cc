"""Exception hierarchy shared by all eqalloc modules."""


class EqallocError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(EqallocError):
    """Load vectors of unequal length were supplied."""


class NonpositiveMass(EqallocError):
    """A finite-population correction mass entry is not strictly positive."""


class ConditionNotSatisfied(EqallocError):
    """The solvability condition failed and force certification was not requested."""


class NoPositiveEigenvalue(EqallocError):
    """The perturbed matrix has no eigenvalue in (0, inf)."""


class MultiplePositiveEigenvalues(EqallocError):
    """Certification found more than one positive eigenvalue."""


class NonConvergence(EqallocError):
    """The eigen solver failed to converge within its iteration budget."""


class ZeroTotal(EqallocError):
    """A subpopulation total of the study variable is zero."""


class NonpositiveGamma(EqallocError):
    """Between-PSU net variance coefficient is not positive for some cells.

    Carries the offending (subpopulation, stratum) index pairs in ``cells``.
    """

    def __init__(self, cells):
        self.cells = list(cells)
        super().__init__(
            "nonpositive between-PSU coefficient in cells (subpop, stratum): "
            + ", ".join(str(c) for c in self.cells)
        )


class MultipleSsuStrata(EqallocError):
    """A fixed-SSU-size derivation requires exactly one SSU stratum per PSU."""


class MissingSizeMeasure(EqallocError):
    """A size-proportional derivation needs PSU size shares that are absent."""


class ParseError(EqallocError):
    """A population or frame file could not be parsed."""


class ValidationError(EqallocError):
    """A loaded structure violates its invariants.

    ``violations`` lists every broken invariant with its tree path.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid population:\n  " + "\n  ".join(self.violations))


class SchemeMismatch(EqallocError):
    """Coefficients were derived for a different design than requested."""


class BudgetTooLarge(EqallocError):
    """No positive precision solves the budget equation."""


class ZeroCell(EqallocError):
    """Precision evaluation hit a zero sample size in a cell that needs one."""


class InfeasibleCap(EqallocError):
    """Capacity caps make the integer budget unattainable."""


class GammaInfeasible(EqallocError):
    """Frame generation failed to reach positive between-PSU coefficients."""


class InclusionOverflow(EqallocError):
    """A first-order inclusion probability would exceed one."""


class SingletonStratum(EqallocError):
    """Bootstrap resampling needs at least two sampled PSUs per stratum."""
