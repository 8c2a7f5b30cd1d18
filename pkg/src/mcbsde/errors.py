"""Exception types shared across the package."""


class McbsdeError(Exception):
    """Base class for all library errors."""


# -- Markov chain ------------------------------------------------------------

class NegativeRate(McbsdeError):
    """An off-diagonal generator entry is below -tolerance."""


class RowSumViolation(McbsdeError):
    """A generator row does not sum to zero within tolerance."""


class NotWeaklyIrreducible(McbsdeError):
    """The stationarity system has no unique nonnegative solution."""


class DimensionMismatch(McbsdeError):
    """Inputs have incompatible shapes."""


class UnknownState(McbsdeError):
    """A chain state is not covered by the partition."""


# -- BSDE solver -------------------------------------------------------------

class StepTooLarge(McbsdeError):
    """Time step violates the implicit-stepping contraction bound."""


class RegressionSingular(McbsdeError):
    """The regression Gram matrix is rank deficient."""


class NoConvergence(McbsdeError):
    """An iterative procedure failed to contract."""


class ZDependentDriver(McbsdeError):
    """Operation requires a driver that does not read the z argument."""


# -- LQ control --------------------------------------------------------------

class RiccatiBlowup(McbsdeError):
    """Backward Riccati integration exceeded the norm threshold."""


class OptimalityViolation(McbsdeError):
    """A verification check failed beyond its statistical tolerance."""


# -- PDE solver --------------------------------------------------------------

class CFLViolation(McbsdeError):
    """Explicit reaction step exceeds its stability bound."""


class NonEllipticSigma(McbsdeError):
    """Diffusion coefficient violates the uniform ellipticity floor."""


# -- CLI ---------------------------------------------------------------------

class ConfigInvalid(McbsdeError):
    """Experiment configuration failed strict validation."""


class UnknownKind(McbsdeError):
    """Unknown experiment kind."""
