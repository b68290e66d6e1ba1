"""Structured errors raised while reading or building scene configs."""


class ConfigError(ValueError):
    pass


class ParseError(ConfigError):
    """Syntax error at a 1-based ``line`` and ``column``."""

    def __init__(self, line: int, column: int, message: str):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column
        self.message = message


class ValidationError(ConfigError):
    """Semantic error at a field ``path`` such as ``joints[0].parent``."""

    def __init__(self, path: str, message: str, line: int = None):
        where = f"{path} (line {line})" if line is not None else path
        super().__init__(f"{where}: {message}" if path else message)
        self.path = path
        self.message = message
        self.line = line


class CyclicJointGraph(ConfigError):
    """The joint graph is not a forest, so default placement is undefined."""

    def __init__(self, bodies):
        self.bodies = list(bodies)
        super().__init__(f"joint graph has a cycle through bodies {self.bodies}")
