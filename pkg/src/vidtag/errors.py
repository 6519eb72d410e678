"""Exception hierarchy; the CLI maps each class to an exit code."""


class VidtagError(Exception):
    exit_code = 3

    def __init__(self, message, *, stage=None, item=None):
        super().__init__(message)
        self.stage = stage
        self.item = item

    def __str__(self):
        msg = super().__str__()
        where = []
        if self.stage:
            where.append(f"stage={self.stage}")
        if self.item:
            where.append(f"item={self.item}")
        return f"{msg} ({', '.join(where)})" if where else msg


class InputError(VidtagError):
    """Malformed or inconsistent input data."""

    exit_code = 1


class ConfigError(VidtagError):
    exit_code = 2


class InvariantError(VidtagError):
    """An internal consistency check failed."""

    exit_code = 3
