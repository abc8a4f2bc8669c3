"""Language codes, control tokens, and translation directions.

The toolkit ships with the seven codes it was built around and lets tests or
downstream users register additional (e.g. synthetic) languages.  Every
registered code owns exactly one control token of the form ``__t2<code>__``
which, prepended to an encoder input, selects the target language.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ConfigError

DEFAULT_LANGS = ("en", "hi", "bn", "ml", "ta", "te", "ur")

_CODE_RE = re.compile(r"^[a-z][a-z0-9]{1,7}$")

_registry: set[str] = set(DEFAULT_LANGS)


def control_token(code: str) -> str:
    """Surface form of the control token selecting ``code`` as target."""
    return f"__t2{code}__"


def register_language(code: str) -> str:
    """Add a language code to the registry. Idempotent. Returns the code."""
    if not _CODE_RE.match(code):
        raise ConfigError(f"invalid language code {code!r}: want lowercase ascii, 2-8 chars")
    _registry.add(code)
    return code


def registered_languages() -> tuple[str, ...]:
    return tuple(sorted(_registry))


def is_registered(code: str) -> bool:
    return code in _registry


def require_registered(code: str) -> str:
    if code not in _registry:
        raise ConfigError(f"unregistered language code {code!r}; register_language() it first")
    return code


@dataclass(frozen=True)
class Direction:
    """An ordered (source language, target language) pair."""

    src: str
    tgt: str

    def __post_init__(self):
        require_registered(self.src)
        require_registered(self.tgt)

    def __str__(self):
        return f"{self.src}-{self.tgt}"
