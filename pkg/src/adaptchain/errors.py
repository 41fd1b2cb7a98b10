"""Exception hierarchy.

``ConfigError`` and ``ValidationError`` map to CLI exit codes 2 and 3.
"""


class AdaptChainError(Exception):
    pass


class ConfigError(AdaptChainError):
    pass


class ValidationError(AdaptChainError, ValueError):
    pass


class WorkflowParseError(ValidationError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class CycleError(ValidationError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("control edges contain a cycle: " + " -> ".join(self.cycle))


class UnknownTaskError(AdaptChainError, LookupError):
    def __init__(self, task_id):
        self.task_id = task_id
        super().__init__(f"unknown task {task_id!r}")


class CatalogError(AdaptChainError, LookupError):
    pass


class FeasibilityError(AdaptChainError):
    pass


class BindingError(AdaptChainError):
    pass


class SelectionError(AdaptChainError):
    """No candidate chain to choose from."""


class ApplicationError(AdaptChainError):
    pass
