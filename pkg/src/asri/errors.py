"""Exception hierarchy shared by all modules."""


class AsriError(Exception):
    """Base class for errors raised by this package."""


class DomainError(AsriError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class UnsupportedWordError(AsriError, ValueError):
    """A driver was asked for an iterated integral it cannot produce."""

    def __init__(self, words, reason: str = ""):
        self.words = tuple(words)
        from .words import format_word

        listing = ", ".join(format_word(w) for w in self.words)
        msg = f"unsupported word(s): {listing}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class BudgetExceededError(AsriError, ValueError):
    """A word needs more derivatives than the configured jet budget."""


class MissingIntegralError(AsriError, KeyError):
    """A scheme row refers to an integral the step sample does not carry."""
