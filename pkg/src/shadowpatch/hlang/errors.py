"""Error types shared by the handler-language front end and interpreter."""


class HplError(Exception):
    pass


class HplSyntaxError(HplError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class DuplicateMethod(HplSyntaxError):
    def __init__(self, name: str, line: int, col: int):
        super().__init__(f"duplicate method {name!r}", line, col)
        self.name = name


class UnknownCallTarget(HplSyntaxError):
    def __init__(self, name: str, line: int, col: int):
        super().__init__(f"call to undeclared method {name!r}", line, col)
        self.name = name


class SandboxViolation(HplError):
    """A handler attempted a store access mode its handle forbids."""


class StepLimitExceeded(Exception):
    """Internal: interpreter step budget exhausted.

    Deliberately not an HplError subclass and not catchable by in-language
    try/catch; it surfaces as an Exception outcome of kind "timeout".
    """
