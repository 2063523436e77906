"""Exponentiated gradient with wipeout for expert selection, plus toy studies."""

__version__ = "0.1.0"
