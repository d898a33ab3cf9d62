"""Exception types shared across the toolkit."""


class VitmapError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(VitmapError):
    """An input document violates its schema or internal consistency rules."""


class InfeasibleTilesError(VitmapError):
    """Tile parameters violate the hardware constraints; callers should prune."""

    def __init__(self, violations):
        self.violations = tuple(violations)
        super().__init__("; ".join(self.violations))


class EmptySearchSpaceError(VitmapError):
    """No feasible tile configuration exists for the given hardware."""


class StageError(VitmapError):
    """Pipeline failure tagged with the stage that produced it."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")
