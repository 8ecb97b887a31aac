"""Exception hierarchy shared across the toolkit.

The CLI maps ConfigError to exit code 2 and every other SmtError to exit
code 1, so stage code should raise the most specific class that applies.
"""


class SmtError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SmtError):
    """Bad manifest, experiment config, rule file, or CLI arguments."""


class ParseError(SmtError):
    """Malformed data file (phrase table, ARPA, n-best, ...)."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc += str(path)
        if line is not None:
            loc += f":{line}"
        if loc:
            message = f"{loc}: {message}"
        super().__init__(message)
        self.path = path
        self.line = line


class StageError(SmtError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage, message):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
