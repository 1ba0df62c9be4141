"""Exception hierarchy shared by all modules."""


class CoallocError(Exception):
    """Base class for errors raised by this package."""


class StructuralError(CoallocError):
    """Network topology cannot support a DC power flow (disconnected, singular)."""


class BalanceError(CoallocError):
    """Zonal injections or activations do not sum to zero."""


class VertexCapError(CoallocError):
    """Enumeration of activation vertices or oracle candidates exceeds its cap."""


class SolverError(CoallocError):
    """The linear program could not be solved to a verified optimum."""


class InputError(CoallocError):
    """An instance or result file is malformed or inconsistent."""


class MissingPriceError(CoallocError):
    """A traded zone-product has no settled price."""

    def __init__(self, missing):
        self.missing = list(missing)
        listed = ", ".join(f"({z}, {p})" for z, p in self.missing)
        super().__init__(f"no settled price for traded zone-products: {listed}")
