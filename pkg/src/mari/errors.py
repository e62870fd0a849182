"""Exception types shared across the package."""


class MariError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(MariError, ValueError):
    """Operands or graph edges have incompatible shapes."""


class InvalidArgumentError(MariError, ValueError):
    """An argument is outside its documented domain."""


class BoundsError(MariError, IndexError):
    """A column window falls outside the tensor."""


class CycleError(MariError, ValueError):
    """The node set does not form a DAG."""


class GraphParseError(MariError, ValueError):
    """Malformed graph text. Carries the offending line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class InputBindingError(MariError, ValueError):
    """An input bundle does not match the graph's Input nodes."""


class SignatureError(MariError, ValueError):
    """Two graphs disagree on their Input-node signature."""


class FragmentedLayoutError(MariError, ValueError):
    """A rewrite was attempted on a non-neat layout.

    Run the layout reorganization pass on the site first.
    """
