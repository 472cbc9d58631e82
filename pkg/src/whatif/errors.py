"""Exception hierarchy shared by the engine, CLI, and server."""


class WhatIfError(Exception):
    """Base class for all engine errors."""


class ValidationError(WhatIfError):
    """Caller supplied invalid input (bad selection, bad spec, bad bounds)."""


class DataFormatError(ValidationError):
    """Malformed CSV or other unreadable input data."""


class SingleClassError(ValidationError):
    """Discrete KPI column contains only one class; nothing to learn."""


class ComputeError(WhatIfError):
    """Numerical failure at runtime (singular system, failed factorization)."""
