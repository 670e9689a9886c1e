"""
Exception hierarchy shared by every curvlab package.

The CLI maps ValidationError/ConfigError to exit code 2 and NumericalError to exit code 3.
"""


class CurvlabError(Exception):
    """Base class for all curvlab errors"""


class ValidationError(CurvlabError, ValueError):
    """A precondition of a library operation was violated"""


class ConfigError(ValidationError):
    """A JSON config does not match its schema"""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class NumericalError(CurvlabError, ArithmeticError):
    """A computation produced non-finite values or could not be carried out"""
