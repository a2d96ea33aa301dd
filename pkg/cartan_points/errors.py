from __future__ import annotations

from typing import Optional


class CartanError(Exception):
    pass


class ConfigError(CartanError, ValueError):
    pass


class PrecisionExhausted(CartanError):
    def __init__(self, message: str, bits: Optional[int] = None) -> None:
        super().__init__(message)
        self.bits = bits


class NoSignChange(CartanError):
    pass


class AmbiguousValue(CartanError):
    pass


class ValidationFailed(CartanError):
    def __init__(self, check: str, residual: object = None) -> None:
        super().__init__(f"validation failed: {check} (residual={residual})")
        self.check = check
        self.residual = residual


class ReductionStalled(CartanError):
    pass


class UnitBasisError(CartanError):
    pass


class CheckpointError(CartanError):
    pass
