"""Phonemic writing system: grapheme inventory, tokenization, and rendering.

An orthography is a small, config-supplied inventory of graphemes (each
possibly several codepoints), classified as consonant, vowel,
boundary-marker, suprasegmental, or separator.  Text is decomposed by
greedy longest-match; suprasegmental markers (stress, intonation) are
stripped before anything reaches the recognizer, while boundary markers
such as the enclitic join stay in.  Alternate transliteration schemes
re-render the same grapheme stream, e.g. for contributors who would
rather read "sh" than the phonemic symbol.
"""
from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field

from .ctc import BLANK, Vocab
from .errors import ConfigError, UnknownSymbolError

GRAPHEME_CLASSES = ("consonant", "vowel", "boundary-marker", "suprasegmental", "separator")

SEPARATOR_SYMBOL = " "


@dataclass(frozen=True)
class Grapheme:
    symbol: str
    cls: str
    simplified: str

    def __post_init__(self):
        if not self.symbol:
            raise ConfigError("empty grapheme symbol")
        if self.cls not in GRAPHEME_CLASSES:
            raise ConfigError(f"unknown grapheme class {self.cls!r}")
        if self.cls == "suprasegmental" and self.simplified != "":
            raise ConfigError(
                f"suprasegmental grapheme {self.symbol!r} must have empty simplified form"
            )


@dataclass(frozen=True)
class Orthography:
    name: str
    graphemes: tuple[Grapheme, ...]

    def __post_init__(self):
        seen = set()
        for g in self.graphemes:
            if g.symbol in seen:
                raise ConfigError(f"duplicate grapheme symbol {g.symbol!r}")
            seen.add(g.symbol)
        if sum(1 for g in self.graphemes if g.cls == "separator") != 1:
            raise ConfigError("orthography must contain exactly one separator grapheme")

    @property
    def separator(self) -> Grapheme:
        return next(g for g in self.graphemes if g.cls == "separator")

    def get(self, symbol: str) -> Grapheme | None:
        return self._by_symbol.get(symbol)

    @property
    def _by_symbol(self) -> dict[str, Grapheme]:
        # frozen dataclass: build lazily, cache on the instance
        cached = self.__dict__.get("_symbol_cache")
        if cached is None:
            cached = {g.symbol: g for g in self.graphemes}
            self.__dict__["_symbol_cache"] = cached
        return cached

    @property
    def max_symbol_len(self) -> int:
        return max(len(g.symbol) for g in self.graphemes)


@dataclass(frozen=True)
class TransliterationScheme:
    name: str
    renderings: dict[str, str] = field(compare=False)

    def check_total(self, orth: Orthography) -> None:
        missing = [g.symbol for g in orth.graphemes if g.symbol not in self.renderings]
        if missing:
            raise ConfigError(
                f"scheme {self.name!r} missing renderings for: "
                + ", ".join(repr(s) for s in missing)
            )


def _nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def load_orthography(config_text: str, name: str = "default") -> Orthography:
    """Parse an orthography config: one ``symbol<TAB>class<TAB>simplified`` line
    per grapheme, ``#`` comments and blank lines ignored.

    The simplified column may be omitted; it then defaults to the symbol
    itself ("" for suprasegmentals).  A space separator is appended
    automatically when the config does not declare one.
    """
    graphemes: list[Grapheme] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(config_text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise ConfigError(
                f"expected symbol<TAB>class[<TAB>simplified], got {line!r}", line=lineno
            )
        symbol = _nfc(parts[0])
        cls = parts[1].strip()
        if not symbol:
            raise ConfigError("empty grapheme symbol", line=lineno)
        if cls not in GRAPHEME_CLASSES:
            raise ConfigError(f"unknown grapheme class {cls!r}", line=lineno)
        if len(parts) == 3:
            simplified = _nfc(parts[2])
        else:
            simplified = "" if cls == "suprasegmental" else symbol
        if symbol in seen:
            raise ConfigError(
                f"duplicate grapheme symbol {symbol!r} (first declared on line {seen[symbol]})",
                line=lineno,
            )
        seen[symbol] = lineno
        try:
            graphemes.append(Grapheme(symbol, cls, simplified))
        except ConfigError as e:
            raise ConfigError(str(e), line=lineno) from None
    if not any(g.cls == "separator" for g in graphemes):
        graphemes.append(Grapheme(SEPARATOR_SYMBOL, "separator", SEPARATOR_SYMBOL))
    return Orthography(name=name, graphemes=tuple(graphemes))


def load_scheme(scheme_text: str, orth: Orthography) -> TransliterationScheme:
    """Parse a scheme file: a ``scheme <name>`` header, then one
    ``symbol<TAB>rendering`` line per grapheme (empty rendering drops the
    grapheme).  The map must cover the whole inventory; the separator
    defaults to itself when not listed.
    """
    name = None
    renderings: dict[str, str] = {}
    for lineno, raw in enumerate(scheme_text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if name is None:
            if not line.startswith("scheme "):
                raise ConfigError("scheme file must start with 'scheme <name>'", line=lineno)
            name = line[len("scheme "):].strip()
            if not name:
                raise ConfigError("empty scheme name", line=lineno)
            continue
        parts = line.split("\t")
        if len(parts) == 1:
            parts = [parts[0], ""]
        if len(parts) != 2:
            raise ConfigError(f"expected symbol<TAB>rendering, got {line!r}", line=lineno)
        symbol = _nfc(parts[0])
        if symbol in renderings:
            raise ConfigError(f"duplicate rendering for {symbol!r}", line=lineno)
        renderings[symbol] = _nfc(parts[1])
    if name is None:
        raise ConfigError("scheme file is empty")
    renderings.setdefault(orth.separator.symbol, orth.separator.symbol)
    scheme = TransliterationScheme(name=name, renderings=renderings)
    scheme.check_total(orth)
    return scheme


def builtin_schemes(orth: Orthography) -> dict[str, TransliterationScheme]:
    """The two schemes every orthography carries for free.

    "phonemic" is the identity; "simplified" renders each grapheme via its
    simplified form (dropping suprasegmentals and, by convention of the
    shipped configs, the enclitic boundary marker).
    """
    phonemic = TransliterationScheme(
        "phonemic", {g.symbol: g.symbol for g in orth.graphemes}
    )
    simplified = TransliterationScheme(
        "simplified", {g.symbol: g.simplified for g in orth.graphemes}
    )
    return {"phonemic": phonemic, "simplified": simplified}


def tokenize(text: str, orth: Orthography) -> list[Grapheme]:
    """Greedy longest-match decomposition of ``text`` into graphemes.

    Concatenating the symbols of the result reproduces the (NFC) input
    exactly.  Raises UnknownSymbolError at the first position where no
    inventory symbol matches.
    """
    text = _nfc(text)
    by_symbol = orth._by_symbol
    max_len = orth.max_symbol_len
    out: list[Grapheme] = []
    i = 0
    n = len(text)
    while i < n:
        match = None
        for l in range(min(max_len, n - i), 0, -1):
            g = by_symbol.get(text[i:i + l])
            if g is not None:
                match = g
                break
        if match is None:
            raise UnknownSymbolError(text, i)
        out.append(match)
        i += len(match.symbol)
    return out


def normalize(text: str, orth: Orthography) -> str:
    """Strip suprasegmental markers (stress, intonation); keep everything else.

    Idempotent, and the output always re-tokenizes.
    """
    return "".join(g.symbol for g in tokenize(text, orth) if g.cls != "suprasegmental")


def transliterate(text: str, orth: Orthography, scheme: TransliterationScheme) -> str:
    """Render ``text`` grapheme-by-grapheme under ``scheme``."""
    return "".join(scheme.renderings[g.symbol] for g in tokenize(text, orth))


def build_vocab(orth: Orthography) -> Vocab:
    """CTC alphabet for this orthography: blank, separator, then every
    non-suprasegmental grapheme in inventory order."""
    symbols = [BLANK, orth.separator.symbol]
    for g in orth.graphemes:
        if g.cls in ("suprasegmental", "separator"):
            continue
        if g.symbol == BLANK:
            raise ConfigError(f"grapheme symbol collides with the CTC blank {BLANK!r}")
        symbols.append(g.symbol)
    return Vocab(tuple(symbols))
