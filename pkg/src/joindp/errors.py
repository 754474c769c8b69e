"""Exception hierarchy shared across the library.

Each CLI-facing failure class gets its own exit code (see cli.EXIT_CODES).
"""


class JoinDpError(Exception):
    """Base class for all library errors."""


class SupportTooLarge(JoinDpError):
    """A materialized (sub-)join exceeded the configured entry cap."""


class DomainTooLarge(JoinDpError):
    """A dense joined domain exceeded the configured cell cap."""


class AttributeNotInSchema(JoinDpError):
    pass


class WrongArity(JoinDpError):
    """Operation requires a specific number of relations."""


class SchemaNotTwoTableChain(JoinDpError):
    """Two-table partitioning requires exactly one shared attribute."""


class NotHierarchical(JoinDpError):
    pass


class ConfigDomainMismatch(JoinDpError):
    """A degree configuration does not cover the query's node set."""


class NonFiniteScore(JoinDpError):
    pass


class NonPositiveDegree(JoinDpError):
    """Kept for API completeness; degree <= 0 maps to bucket 1 by convention."""


class DegenerateFamily(JoinDpError):
    """Query family is empty."""


class BadInterval(JoinDpError):
    pass


class InfeasibleDelta(JoinDpError):
    """Requested per-neighbor sensitivity cannot be realized."""


class InfeasibleVector(JoinDpError):
    """No divisor of a per-bucket join size lands in the bucket's range."""


class NonPower(JoinDpError):
    """Generator parameter must be a power of a fixed base."""


class InfeasibleSpec(JoinDpError):
    """Generator spec cannot be satisfied."""


class ParseError(JoinDpError):
    """Malformed instance or family file."""
