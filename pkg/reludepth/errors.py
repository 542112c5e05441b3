import typing


class ReluDepthError(Exception):
    pass


class InvalidInputError(ReluDepthError, ValueError):
    pass


class InvalidConfigError(ReluDepthError, ValueError):
    pass


class SpecViolationError(ReluDepthError, ValueError):
    pass


class MalformedDocumentError(ReluDepthError, ValueError):
    pass


class TaylorError(ReluDepthError, ArithmeticError):
    pass


class DivergenceError(ReluDepthError, ArithmeticError):
    pass


class VerificationFailure(ReluDepthError):
    def __init__(self, max_error: float, epsilon: float):
        super().__init__(
            "max error {:.6g} exceeds declared epsilon {:.6g}".format(
                max_error, epsilon,
            )
        )
        self.max_error = max_error
        self.epsilon = epsilon


EXIT_SUCCESS = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_VERIFICATION = 3
EXIT_DIVERGENCE = 4

# checked in order, first match wins
EXIT_CODE_MAP: typing.Sequence[typing.Tuple[typing.Type[BaseException], int]] = (
    (VerificationFailure, EXIT_VERIFICATION),
    (DivergenceError, EXIT_DIVERGENCE),
    (InvalidInputError, EXIT_USAGE),
    (InvalidConfigError, EXIT_USAGE),
    (SpecViolationError, EXIT_USAGE),
    (MalformedDocumentError, EXIT_USAGE),
    (TaylorError, EXIT_USAGE),
    (FileNotFoundError, EXIT_USAGE),
)


def exit_code_for(exc: BaseException) -> int:
    for exc_type, code in EXIT_CODE_MAP:
        if isinstance(exc, exc_type):
            return code
    return EXIT_INTERNAL
