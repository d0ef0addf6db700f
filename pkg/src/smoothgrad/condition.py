"""Deferred relational comparisons on smooth values."""

from .errors import SmoothUsageError

RELATIONS = ("<=", "<", ">=", ">")


class Condition:
    """``lhs rel rhs`` captured for a back-end to evaluate.

    Every relation is normalised to a *margin* ``m`` such that the condition
    holds iff ``m <= 0`` (or ``m < 0`` for the strict forms): ``l - r`` for
    ``<=``/``<`` and ``r - l`` for ``>=``/``>``.
    """

    __slots__ = ("lhs", "rel", "rhs")

    def __init__(self, lhs, rel, rhs):
        if rel not in RELATIONS:
            raise SmoothUsageError(f"unsupported relation {rel!r}")
        self.lhs = lhs
        self.rel = rel
        self.rhs = rhs

    @property
    def strict(self):
        return self.rel in ("<", ">")

    def margin(self):
        if self.rel in ("<=", "<"):
            return self.lhs - self.rhs
        return self.rhs - self.lhs

    def operands(self):
        """Return ``(a, b)`` with the condition meaning ``a - b <= 0``."""
        if self.rel in ("<=", "<"):
            return self.lhs, self.rhs
        return self.rhs, self.lhs

    def __bool__(self):
        raise SmoothUsageError(
            "a comparison of smooth values has no truth value; route it through ctx.branch")

    def __repr__(self):
        return f"Condition({self.lhs!r} {self.rel} {self.rhs!r})"


def margin_holds(m, strict):
    """Crisp evaluation of a margin value."""
    return m < 0 if strict else m <= 0
