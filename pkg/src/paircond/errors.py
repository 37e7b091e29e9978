"""Exception hierarchy for solver failure modes.

Every failure that a caller might reasonably catch and react to (restart
with smaller damping, reject a config, flag a broken invariant upstream)
gets its own class; plain ``ValueError`` is reserved for programming
errors such as shape mismatches.
"""


class SolverError(Exception):
    """Base class for all solver-level failures."""


class NonConvergence(SolverError):
    """An iterative loop exhausted its budget before meeting tolerance."""

    def __init__(self, iterations, residual, message=None, history=None):
        self.iterations = iterations
        self.residual = residual
        self.history = history
        msg = message or f"no convergence after {iterations} iterations (residual {residual:.3e})"
        super().__init__(msg)


class OpNormExceeded(SolverError):
    """A pair kernel left the admissible ball (operator norm >= 1)."""

    def __init__(self, op_norm):
        self.op_norm = op_norm
        super().__init__(f"pair kernel operator norm {op_norm:.6g} >= 1")


class GapViolated(SolverError):
    """The quadratic-form gap that guards the k-step is not positive."""

    def __init__(self, margin):
        self.margin = margin
        super().__init__(f"gap margin {margin:.6g} <= 0; k-step ill-posed")


class HermiticityBroken(SolverError):
    """An assembled operator deviates from Hermitian beyond tolerance."""

    def __init__(self, deviation):
        self.deviation = deviation
        super().__init__(f"Hermiticity deviation {deviation:.3e} exceeds tolerance")


class ComplexSpectrum(SolverError):
    """Quasiparticle eigenvalues acquired imaginary parts (gap broken)."""

    def __init__(self, max_imag):
        self.max_imag = max_imag
        super().__init__(f"quasiparticle spectrum has imaginary parts up to {max_imag:.3e}")


class NondiagonalizableBlock(SolverError):
    """Retained quasiparticle modes do not span the off-condensate space."""

    def __init__(self, found, expected):
        self.found = found
        self.expected = expected
        super().__init__(f"retained {found} modes, expected {expected}")


class SingularFrame(SolverError):
    """The u-frame is numerically singular; k cannot be reconstructed."""

    def __init__(self, cond):
        self.cond = cond
        super().__init__(f"u-frame condition number {cond:.3e} too large")


class DegenerateGround(SolverError):
    """The two lowest eigenvalues coincide; the scheme assumes a gap."""

    def __init__(self, gap):
        self.gap = gap
        super().__init__(f"ground state degenerate within {gap:.3e}")


class FrameNotCommuting(SolverError):
    """A frame fed to the commuting-case formulas fails to diagonalize both operators."""

    def __init__(self, leakage):
        self.leakage = leakage
        super().__init__(f"off-diagonal leakage {leakage:.3e} exceeds tolerance")


class NonRealTrace(SolverError):
    """A trace that must be real came out materially complex."""

    def __init__(self, imag, value):
        self.imag = imag
        self.value = value
        super().__init__(f"trace has imaginary part {imag:.3e} against magnitude {abs(value):.3e}")


class ConfigError(SolverError):
    """A run configuration failed validation."""

    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"config field '{field}': {reason}")
