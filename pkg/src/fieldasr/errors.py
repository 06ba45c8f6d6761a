"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: validation failures exit 1, I/O
problems exit 2, empty/infeasible data exits 3.
"""


class FieldAsrError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(FieldAsrError):
    """Input violates a documented contract (bad config, bad cut, bad transcript...)."""


class UnknownSymbolError(ValidationError):
    """Text contains a codepoint sequence not covered by the orthography."""

    def __init__(self, text: str, position: int):
        self.position = position
        self.codepoint = text[position]
        super().__init__(
            f"no grapheme matches at position {position}: "
            f"{self.codepoint!r} (U+{ord(self.codepoint):04X})"
        )


class ConfigError(ValidationError):
    """Malformed orthography/scheme/project configuration."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AudioFormatError(ValidationError):
    """WAV container is malformed."""


class UnsupportedCodecError(AudioFormatError):
    """WAV is readable but not 16-bit integer PCM with 1-2 channels."""


class EmptyDataError(FieldAsrError):
    """An operation requires data that is absent (empty manifest, empty split, silence)."""


class InfeasibleTargetError(FieldAsrError):
    """Target label sequence cannot be aligned to the available frames."""


class ModelFormatError(FieldAsrError):
    """Serialized model bytes are corrupt or incompatible."""
