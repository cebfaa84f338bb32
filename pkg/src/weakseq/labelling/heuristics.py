"""Hand-written detectors for specific entity types.

Each detector is specialised: it only ever emits the labels listed in its
``labels`` attribute (Ontonotes-style names, projected into the active scheme
through :meth:`LabelScheme.project`). The token grammars below are
reconstructions written for this package:

``money``
    ``CUR NUM [MAG]`` | ``CURNUM [MAG]`` | ``NUM [MAG] CURWORD`` where ``CUR`` is a
    currency symbol or ISO code, ``CURNUM`` a fused token such as ``$40``,
    ``MAG`` a magnitude word (million, bn, ...) and ``CURWORD`` a currency
    noun or code.
``number``
    ``NUM [MAG] (%|percent)`` -> PERCENT, ordinals (``3rd``, ``third``) ->
    ORDINAL, ``NUM [MAG] UNIT`` -> QUANTITY, any other ``NUM [MAG]`` not
    adjacent to a currency -> CARDINAL.
``date``
    Runs anchored on a month, weekday, year, decade, numeric date or a
    relative day word, absorbing adjacent day numbers, ``,``/``of``/``the``
    connectors and ``last``/``next``/``early``... modifiers; also
    ``NUM (days|weeks|months|years) [ago|earlier|later]``.
``time``
    Clock readings (``10:30``, ``9am``, ``9 p.m.``), ``noon``/``midnight``,
    ``this|last|tomorrow`` + ``morning|afternoon|evening|night`` and
    ``tonight``, with an optional trailing time zone.
``proper``
    Maximal runs of capitalised tokens; a sentence-initial token that is a
    frequent word is dropped. Emits a uniform distribution over the generic
    entity labels, since casing alone does not identify the type.
``proper_infrequent``
    ``proper`` runs containing a token ranked beyond 15000 in the shipped
    English frequency list.
``nnp``
    Runs of ``NNP``/``NNPS``/``PROPN`` tokens (abstains without POS tags).
``compound``
    Proper-noun heads together with the contiguous ``compound`` dependents
    preceding them (abstains without dependency annotations).
``full_name``
    A known first name (or a title such as ``Mr.``) followed by capitalised
    tokens or initials -> PERSON.
``company_type``
    A capitalised run ending in a legal company suffix (``Inc.``, ``Ltd``,
    ``AG``...) -> ORG.
``legal``
    A capitalised run ending in ``Act``/``Law``/``Code``/``Treaty``...,
    optionally followed by ``of YEAR`` -> LAW.
``misc``
    Nationalities and religious/political groups -> NORP, languages ->
    LANGUAGE, capitalised runs ending in event or facility nouns -> EVENT /
    FAC.
"""
from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

from ..annotations import ProbAnnotation
from .base import LabellingFunction

GENERIC_LABELS = (
    "PERSON", "PER", "ORG", "GPE", "LOC", "NORP", "FAC", "PRODUCT",
    "EVENT", "WORK_OF_ART", "LAW", "LANGUAGE", "MISC",
)
INFREQUENT_RANK = 15000


@lru_cache(maxsize=None)
def _wordlist(filename):
    text = resources.files(__package__).joinpath("data", filename).read_text(encoding="utf-8")
    return tuple(w.strip() for w in text.splitlines() if w.strip())


@lru_cache(maxsize=None)
def vocabulary_ranks():
    return {w: r for r, w in enumerate(_wordlist("english_top15000.txt"), start=1)}


def is_infrequent(word):
    rank = vocabulary_ranks().get(word.lower())
    return rank is None or rank > INFREQUENT_RANK


@lru_cache(maxsize=None)
def first_names():
    return frozenset(_wordlist("first_names.txt"))


# -- token classes -----------------------------------------------------------

_NUM_RE = re.compile(r"^[+-]?(\d{1,3}(,\d{3})+|\d+)(\.\d+)?$")
_FRACTION_RE = re.compile(r"^\d+/\d+$")
NUMBER_WORDS = frozenset(
    "one two three four five six seven eight nine ten eleven twelve thirteen fourteen fifteen "
    "sixteen seventeen eighteen nineteen twenty thirty forty fifty sixty seventy eighty ninety "
    "hundred dozen half".split()
)
MAGNITUDES = frozenset("hundred thousand million billion trillion mln bln bn m k tn mn".split())
CURRENCY_SYMBOLS = frozenset("$ US$ € £ ¥ C$ A$ HK$ S$ NZ$ Rs Rs. R$".split())
CURRENCY_CODES = frozenset("USD EUR GBP JPY CHF CNY NOK SEK DKK CAD AUD HKD INR RUB BRL".split())
CURRENCY_WORDS = frozenset(
    "dollar dollars euro euros pound pounds sterling yen yuan renminbi franc francs crown crowns "
    "krone kroner kronor rouble roubles ruble rubles rupee rupees cent cents pence peso pesos".split()
)
_FUSED_MONEY_RE = re.compile(r"^(US\$|C\$|A\$|HK\$|\$|€|£|¥)\d[\d,]*(\.\d+)?(m|bn|k|mn)?$")
PERCENT_WORDS = frozenset(["%", "percent", "pct", "per-cent"])
_PERCENT_RE = re.compile(r"^[+-]?\d+(\.\d+)?%$")
_ORDINAL_RE = re.compile(r"^\d+(st|nd|rd|th)$")
ORDINAL_WORDS = frozenset(
    "first second third fourth fifth sixth seventh eighth ninth tenth eleventh twelfth "
    "twentieth thirtieth hundredth".split()
)
UNITS = frozenset(
    "km kilometres kilometers kilometre kilometer miles mile kg kilograms kilos tonnes tons ton "
    "barrels barrel metres meters metre meter feet foot inches acres hectares litres liters "
    "gallons degrees mph lbs ounces sq square cubic mw gw kwh megawatts".split()
)
MONTHS = frozenset(
    "january february march april may june july august september october november december "
    "jan jan. feb feb. mar mar. apr apr. jun jun. jul jul. aug aug. sep sep. sept sept. "
    "oct oct. nov nov. dec dec.".split()
)
WEEKDAYS = frozenset(
    "monday tuesday wednesday thursday friday saturday sunday mon tue tues wed thu thur thurs fri sat sun".split()
)
RELATIVE_DAYS = frozenset("today yesterday tomorrow".split())
DATE_MODIFIERS = frozenset("last next this early late mid past coming previous".split())
DATE_UNITS = frozenset("week weeks month months year years quarter quarters weekend decade century".split())
DURATION_UNITS = frozenset("day days week weeks month months year years decade decades".split())
DATE_TAILS = frozenset("ago earlier later".split())
_YEAR_RE = re.compile(r"^(1[5-9]\d\d|20\d\d)$")
_DECADE_RE = re.compile(r"^(1[5-9]|20)?\d0s$|^'\d0s$")
_NUMERIC_DATE_RE = re.compile(r"^\d{1,2}[/.-]\d{1,2}[/.-]\d{2,4}$|^\d{4}-\d{2}-\d{2}$")
_DAY_RE = re.compile(r"^([1-9]|[12]\d|3[01])(st|nd|rd|th)?$")
_QUARTER_RE = re.compile(r"^(Q[1-4]|H[12])$")
_CLOCK_RE = re.compile(r"^([01]?\d|2[0-3])[:.][0-5]\d([:.][0-5]\d)?$")
_CLOCK_AMPM_RE = re.compile(r"^(1[0-2]|0?[1-9])([:.][0-5]\d)?(am|pm|a\.m\.|p\.m\.)$", re.I)
AMPM = frozenset("am pm a.m. p.m. a.m p.m o'clock".split())
TIME_WORDS = frozenset(["noon", "midnight", "tonight", "overnight"])
DAY_PARTS = frozenset("morning afternoon evening night".split())
TIME_MODIFIERS = frozenset("this last tomorrow yesterday early late".split())
TIME_ZONES = frozenset("GMT UTC EST EDT CET CEST BST PST PDT ET CT PT JST".split())
COMPANY_SUFFIXES = frozenset(
    "Inc Inc. Corp Corp. Corporation Ltd Ltd. Limited LLC L.L.C. plc PLC AG GmbH SA S.A. NV N.V. "
    "ASA AS AB Co Co. Company Group Holdings Holding LP L.P. LLP SE SpA S.p.A. BV B.V. Oyj KK".split()
)
LAW_HEADS = frozenset(
    "Act Law Code Treaty Convention Directive Regulation Constitution Amendment Bill Charter Protocol Accord Accords".split()
)
NORP_WORDS = frozenset(
    "American Americans British Briton Britons English French German Germans Italian Italians Spanish "
    "Chinese Japanese Korean Russian Russians Indian Indians Canadian Canadians Australian Mexican "
    "Brazilian Dutch Swiss Swedish Norwegian Danish Finnish Polish Greek Turkish Iranian Iraqi Israeli "
    "Israelis Palestinian Palestinians Saudi Egyptian Syrian Afghan Pakistani European Europeans Asian "
    "African Arab Arabs Irish Scottish Welsh Belgian Austrian Portuguese Ukrainian Serbian Croatian "
    "Bosnian Czech Hungarian Romanian Bulgarian Cuban Argentine Chilean Colombian Venezuelan Nigerian "
    "Kenyan Muslim Muslims Christian Christians Catholic Catholics Protestant Jewish Jews Hindu Hindus "
    "Buddhist Sikh Shiite Sunni Democrat Democrats Republican Republicans Democratic Communist Communists "
    "Socialist Socialists Conservative Conservatives Labour Liberal Liberals Kurdish Kurds Taliban".split()
)
LANGUAGES = frozenset(
    "English French German Spanish Italian Chinese Mandarin Cantonese Japanese Korean Russian Arabic "
    "Hebrew Hindi Urdu Portuguese Dutch Swedish Norwegian Danish Finnish Polish Greek Turkish Persian "
    "Farsi Swahili Latin Esperanto Bengali Punjabi Tamil".split()
)
LANGUAGE_CUES = frozenset("language languages speaking speaker speakers translation".split())
EVENT_HEADS = frozenset(
    "War Olympics Olympic Cup Championship Championships Games Summit Festival Conference Election "
    "Elections Open Prix Tournament Series Revolution Crisis Forum Marathon".split()
)
FAC_HEADS = frozenset(
    "Airport Bridge Stadium Tower Station Street Avenue Road Square Hospital Museum Palace Hall "
    "Centre Center Arena Park Gate Terminal Highway Tunnel Canal Dam Building".split()
)
TITLES = frozenset("Mr Mr. Mrs Mrs. Ms Ms. Dr Dr. Prof Prof. Sir Lady Lord Sen. Rep. Gov. Gen. President".split())
CONNECTORS = frozenset(["of", "and", "&", "de", "for", "the", "von", "van", "der", "du", "la"])
PROPER_POS = frozenset(["NNP", "NNPS", "PROPN"])


def is_number(word):
    w = word.lower()
    return bool(_NUM_RE.match(word) or _FRACTION_RE.match(word)) or w in NUMBER_WORDS


def is_capitalised(word):
    return word[:1].isupper() and any(c.isalpha() for c in word)


def _lower(words):
    return [w.lower() for w in words]


# -- detectors -----------------------------------------------------------------


class _Detector(LabellingFunction):
    needs_pos = False
    needs_dep = False

    def __init__(self, name=None):
        if name is not None:
            self.name = name

    def available(self, doc):
        return (not self.needs_pos or doc.has_pos) and (not self.needs_dep or doc.has_dep)

    def __call__(self, doc, scheme):
        if not self.available(doc):
            return ProbAnnotation(self.name, {})
        return super().__call__(doc, scheme)

    def spans(self, doc):
        for s_start, s_end in doc.sentences:
            words = doc.words[s_start:s_end]
            for start, end, dist in self.sentence_spans(doc, s_start, words):
                yield s_start + start, s_start + end, dist

    def sentence_spans(self, doc, offset, words):
        raise NotImplementedError


def _skip_magnitude(lw, k):
    return k + 1 if k < len(lw) and lw[k] in MAGNITUDES else k


class MoneyDetector(_Detector):
    name = "money_detector"
    labels = ("MONEY",)

    def sentence_spans(self, doc, offset, words):
        lw = _lower(words)
        i = 0
        while i < len(words):
            end = self._match(words, lw, i)
            if end:
                yield i, end, {"MONEY": 1.0}
                i = end
            else:
                i += 1

    @staticmethod
    def _match(words, lw, i):
        w = words[i]
        if _FUSED_MONEY_RE.match(w):
            return _skip_magnitude(lw, i + 1)
        if (w in CURRENCY_SYMBOLS or w in CURRENCY_CODES) and i + 1 < len(words) and is_number(words[i + 1]):
            return _skip_magnitude(lw, i + 2)
        if is_number(w):
            k = _skip_magnitude(lw, i + 1)
            if k < len(words) and (lw[k] in CURRENCY_WORDS or words[k] in CURRENCY_CODES):
                return k + 1
        return 0


class NumberDetector(_Detector):
    name = "number_detector"
    labels = ("CARDINAL", "ORDINAL", "PERCENT", "QUANTITY")

    def sentence_spans(self, doc, offset, words):
        lw = _lower(words)
        i = 0
        while i < len(words):
            w = words[i]
            if _PERCENT_RE.match(w):
                yield i, i + 1, {"PERCENT": 1.0}
                i += 1
            elif _ORDINAL_RE.match(lw[i]) or lw[i] in ORDINAL_WORDS:
                yield i, i + 1, {"ORDINAL": 1.0}
                i += 1
            elif is_number(w) and not _YEAR_RE.match(w):
                k = _skip_magnitude(lw, i + 1)
                prev = words[i - 1] if i else ""
                if prev in CURRENCY_SYMBOLS or prev in CURRENCY_CODES:
                    i = k
                elif k < len(words) and (lw[k] in CURRENCY_WORDS or words[k] in CURRENCY_CODES):
                    i = k + 1
                elif k < len(words) and lw[k] in PERCENT_WORDS:
                    yield i, k + 1, {"PERCENT": 1.0}
                    i = k + 1
                elif k < len(words) and lw[k] in UNITS:
                    yield i, k + 1, {"QUANTITY": 1.0}
                    i = k + 1
                else:
                    yield i, k, {"CARDINAL": 1.0}
                    i = k
            else:
                i += 1


def _is_date_anchor(word, lw):
    # month and weekday names must be capitalised: "may", "sat" and "march" are common words
    named = (lw in MONTHS or lw in WEEKDAYS) and word[:1].isupper()
    return (
        named or lw in RELATIVE_DAYS
        or bool(_YEAR_RE.match(word) or _DECADE_RE.match(word) or _NUMERIC_DATE_RE.match(word) or _QUARTER_RE.match(word))
    )


class DateDetector(_Detector):
    name = "date_detector"
    labels = ("DATE",)

    def sentence_spans(self, doc, offset, words):
        lw = _lower(words)
        n = len(words)
        i = 0
        while i < n:
            span = self._duration(words, lw, i) or self._anchored(words, lw, i)
            if span:
                yield i, span, {"DATE": 1.0}
                i = span
            else:
                i += 1

    @staticmethod
    def _duration(words, lw, i):
        if lw[i] in DATE_MODIFIERS and i + 1 < len(words) and lw[i + 1] in DATE_UNITS:
            return i + 2
        if is_number(words[i]) and i + 1 < len(words) and lw[i + 1] in DURATION_UNITS:
            if i + 2 < len(words) and lw[i + 2] in DATE_TAILS:
                return i + 3
        return 0

    @staticmethod
    def _anchored(words, lw, i):
        n = len(words)
        start = i
        # a run may open with a modifier or a day number ("12 March", "last Friday")
        if lw[i] in DATE_MODIFIERS or lw[i] == "the" or _DAY_RE.match(lw[i]):
            k = i + 1
            if lw[i] == "the" and k < n and _DAY_RE.match(lw[k]):
                k += 1
                if k < n and lw[k] == "of":
                    k += 1
            if not (k < n and _is_date_anchor(words[k], lw[k]) and (lw[k] in MONTHS or lw[i] in DATE_MODIFIERS)):
                return 0
            i = k
        elif not _is_date_anchor(words[i], lw[i]):
            return 0
        end = i + 1
        while end < n:
            w, l = words[end], lw[end]
            if _is_date_anchor(w, l) or (_DAY_RE.match(l) and lw[end - 1] in MONTHS):
                end += 1
            elif l in (",", "of") and end + 1 < n and (
                _YEAR_RE.match(words[end + 1]) or (l == "," and lw[end + 1] in MONTHS)
            ):
                end += 2
            else:
                break
        return end if end > start else 0


class TimeDetector(_Detector):
    name = "time_detector"
    labels = ("TIME",)

    def sentence_spans(self, doc, offset, words):
        lw = _lower(words)
        n = len(words)
        i = 0
        while i < n:
            end = 0
            if _CLOCK_RE.match(words[i]) or _CLOCK_AMPM_RE.match(words[i]):
                end = i + 1
                if end < n and lw[end] in AMPM:
                    end += 1
            elif is_number(words[i]) and i + 1 < n and lw[i + 1] in AMPM:
                end = i + 2
            elif lw[i] in TIME_WORDS:
                end = i + 1
            elif lw[i] in TIME_MODIFIERS and i + 1 < n and lw[i + 1] in DAY_PARTS:
                end = i + 2
            if end:
                if end < n and words[end] in TIME_ZONES:
                    end += 1
                yield i, end, {"TIME": 1.0}
                i = end
            else:
                i += 1


def capitalised_runs(words, connectors=False):
    """Maximal ``[start, end)`` runs of capitalised tokens.

    With ``connectors`` a lowercase connector ("of", "and", ...) may join
    two capitalised tokens; pass a set to restrict which connectors count.
    """
    allowed = connectors if isinstance(connectors, (set, frozenset)) else CONNECTORS
    runs = []
    i = 0
    n = len(words)
    while i < n:
        if not is_capitalised(words[i]):
            i += 1
            continue
        end = i + 1
        while end < n:
            if is_capitalised(words[end]):
                end += 1
            elif connectors and words[end] in allowed and end + 1 < n and is_capitalised(words[end + 1]):
                end += 2
            else:
                break
        runs.append((i, end))
        i = end
    return runs


def _frequent(word, limit=2000):
    rank = vocabulary_ranks().get(word.lower())
    return rank is not None and rank <= limit


class ProperDetector(_Detector):
    name = "proper_detector"
    labels = GENERIC_LABELS
    connectors = False
    infrequent_only = False

    def sentence_spans(self, doc, offset, words):
        for start, end in capitalised_runs(words, self.connectors):
            if start == 0 and _frequent(words[0]):
                start += 1
            if start >= end or all(not c.isalpha() for c in "".join(words[start:end])):
                continue
            if self.infrequent_only and not any(is_infrequent(w) for w in words[start:end]):
                continue
            yield start, end, None


class InfrequentProperDetector(ProperDetector):
    name = "infrequent_proper_detector"
    infrequent_only = True


class NnpDetector(ProperDetector):
    name = "nnp_detector"
    needs_pos = True

    def sentence_spans(self, doc, offset, words):
        i = 0
        n = len(words)
        while i < n:
            if doc.tokens[offset + i].pos in PROPER_POS:
                end = i + 1
                while end < n and doc.tokens[offset + end].pos in PROPER_POS:
                    end += 1
                yield i, end, None
                i = end
            else:
                i += 1


class CompoundDetector(ProperDetector):
    name = "compound_detector"
    needs_dep = True

    def sentence_spans(self, doc, offset, words):
        toks = doc.tokens[offset:offset + len(words)]
        for h, tok in enumerate(toks):
            proper = tok.pos in PROPER_POS if tok.pos is not None else is_capitalised(tok.text)
            if not proper or tok.dep[0] == "compound":
                continue
            start = h
            while start > 0:
                prev = toks[start - 1]
                head = prev.dep[1] - offset
                if prev.dep[0] == "compound" and start - 1 < head <= h:
                    start -= 1
                else:
                    break
            if h - start >= 1:
                yield start, h + 1, None


class FullNameDetector(_Detector):
    name = "full_name_detector"
    labels = ("PERSON",)

    def sentence_spans(self, doc, offset, words):
        names = first_names()
        i = 0
        n = len(words)
        while i < n:
            w = words[i]
            if w in names or w in TITLES:
                start = i + 1 if w in TITLES else i
                end = i + 1
                while end < n and (is_capitalised(words[end]) or re.match(r"^[A-Z]\.$", words[end])):
                    if words[end] in COMPANY_SUFFIXES:
                        break
                    end += 1
                if end - start >= (1 if w in TITLES else 2):
                    yield start, end, {"PERSON": 1.0}
                    i = end
                    continue
            i += 1


COMPANY_CONNECTORS = frozenset({"&", "and"})


class CompanyTypeDetector(_Detector):
    name = "company_type_detector"
    labels = ("ORG",)

    def sentence_spans(self, doc, offset, words):
        # only "&" / "and" bridge company names; "of" would pull in a preceding person
        for start, end in capitalised_runs(words, connectors=COMPANY_CONNECTORS):
            # the suffix itself is capitalised, so it closes the run
            for k in range(start + 1, end):
                if words[k] in COMPANY_SUFFIXES:
                    s = start + 1 if start == 0 and _frequent(words[0]) and k > 1 else start
                    yield s, k + 1, {"ORG": 1.0}
                    break


class LegalDetector(_Detector):
    name = "legal_detector"
    labels = ("LAW",)

    def sentence_spans(self, doc, offset, words):
        n = len(words)
        for start, end in capitalised_runs(words, connectors=True):
            heads = [k for k in range(start + 1, end) if words[k] in LAW_HEADS]
            if not heads:
                continue
            last = heads[-1] + 1
            if last + 1 < n and words[last] == "of" and _YEAR_RE.match(words[last + 1]):
                last += 2
            if start == 0 and _frequent(words[0]) and heads[-1] > 1:
                start = 1
            yield start, last, {"LAW": 1.0}


class MiscDetector(_Detector):
    name = "misc_detector"
    labels = ("NORP", "LANGUAGE", "FAC", "EVENT")

    def sentence_spans(self, doc, offset, words):
        lw = _lower(words)
        n = len(words)
        taken = set()
        for start, end in capitalised_runs(words, connectors=True):
            head = words[end - 1]
            if end - start >= 2 and (head in EVENT_HEADS or head in FAC_HEADS):
                if start == 0 and _frequent(words[0]):
                    start = 1
                if end - start >= 1:
                    yield start, end, {"EVENT" if head in EVENT_HEADS else "FAC": 1.0}
                    taken.update(range(start, end))
        for i, w in enumerate(words):
            if i in taken:
                continue
            if w in LANGUAGES and (i + 1 < n and lw[i + 1] in LANGUAGE_CUES or w not in NORP_WORDS):
                yield i, i + 1, {"LANGUAGE": 1.0}
            elif w in NORP_WORDS:
                yield i, i + 1, {"NORP": 1.0}

    def spans(self, doc):
        # event/facility spans and single-word spans are produced in two passes
        return sorted(super().spans(doc), key=lambda t: t[0])


DETECTORS = {
    "date": DateDetector,
    "time": TimeDetector,
    "money": MoneyDetector,
    "number": NumberDetector,
    "proper": ProperDetector,
    "proper_infrequent": InfrequentProperDetector,
    "nnp": NnpDetector,
    "compound": CompoundDetector,
    "full_name": FullNameDetector,
    "company_type": CompanyTypeDetector,
    "legal": LegalDetector,
    "misc": MiscDetector,
}


def make_detector(detector_id, name=None):
    try:
        cls = DETECTORS[detector_id]
    except KeyError:
        raise ValueError(f"unknown detector {detector_id!r}; choose from {sorted(DETECTORS)}") from None
    return cls(name)


def heuristic_detect(doc, detector_id, scheme):
    """Run one detector over ``doc`` and return its annotation."""
    return make_detector(detector_id)(doc, scheme)
