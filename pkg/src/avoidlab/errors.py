"""Shared exception types."""


class ContractViolation(ValueError):
    """A caller violated a documented precondition (shape, bounds, domain)."""
