"""Exception types raised across the package."""


class SketchNMFError(Exception):
    """Base class for all package errors."""


class RankDeficient(SketchNMFError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column} is numerically dependent on the previous ones")


class InvalidDim(SketchNMFError, ValueError):
    pass


class DimMismatch(SketchNMFError, ValueError):
    pass


class NegativeData(SketchNMFError, ValueError):
    def __init__(self, index):
        self.index = tuple(int(i) for i in index)
        super().__init__(f"negative entry at index {self.index}")


class InsufficientSigma(SketchNMFError, ValueError):
    def __init__(self, side, required, given):
        self.side = side
        self.required = required
        self.given = given
        super().__init__(
            f"{side} shift sigma={given!r} is below the certified minimum {required!r}"
        )


class LambdaOutOfRange(SketchNMFError, ValueError):
    pass


class NonFiniteUpdate(SketchNMFError, FloatingPointError):
    pass


class ZeroData(SketchNMFError, ValueError):
    pass


class ZeroFactors(SketchNMFError, ValueError):
    pass


class ParseError(SketchNMFError, ValueError):
    def __init__(self, line, msg="could not parse"):
        self.line = line
        super().__init__(f"line {line}: {msg}")


class DimOverflow(SketchNMFError, ValueError):
    pass


class ConfigError(SketchNMFError, ValueError):
    pass
