"""Natural direct effect estimation under unmeasured exposure-mediator confounding."""

__version__ = "0.1.0"
