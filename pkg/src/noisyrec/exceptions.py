"""Exception types shared across the package."""


class ParseError(ValueError):
    """A raw interaction line could not be parsed; carries the line number."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field path."""


class NumericError(RuntimeError):
    """A computation produced non-finite values (e.g. training divergence)."""
