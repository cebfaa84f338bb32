"""Token-level trie gazetteers with greedy longest-match search."""
from __future__ import annotations

from .base import LabellingFunction

# trie keys are words (str), so None cannot collide and survives pickling
_END = None


def _fold(word):
    return word.casefold()


class Gazetteer(LabellingFunction):
    """Dictionary of multi-token surface forms stored in a token trie.

    Matching runs left to right inside each sentence: at every position the
    longest entry starting there is taken, and the scan resumes after it.
    In ``multitoken_only`` mode single-token matches are ignored.
    """

    def __init__(self, name="gazetteer", case="sensitive", multitoken_only=False):
        if case not in ("sensitive", "insensitive"):
            raise ValueError(f"case mode must be 'sensitive' or 'insensitive', got {case!r}")
        self.name = name
        self.case = case
        self.multitoken_only = multitoken_only
        self._root = {}
        self._size = 0
        self._labels = set()

    @property
    def labels(self):
        return tuple(sorted(self._labels))

    def __len__(self):
        return self._size

    def _key(self, words):
        return [_fold(w) for w in words] if self.case == "insensitive" else list(words)

    def add(self, words, label):
        words = self._key(words)
        if not words:
            raise ValueError("empty gazetteer entry")
        node = self._root
        for w in words:
            node = node.setdefault(w, {})
        existing = node.get(_END)
        if existing is not None and existing != label:
            raise ValueError(
                f"gazetteer entry {' '.join(words)!r} has conflicting labels {existing!r} and {label!r}"
            )
        if existing is None:
            self._size += 1
        node[_END] = label
        self._labels.add(label)

    def longest_match(self, words, start):
        """``(length, label)`` of the longest entry at ``words[start:]``, or ``(0, None)``."""
        node = self._root
        best = (0, None)
        fold = self.case == "insensitive"
        for k in range(start, len(words)):
            node = node.get(_fold(words[k]) if fold else words[k])
            if node is None:
                break
            label = node.get(_END)
            if label is not None:
                best = (k - start + 1, label)
        return best

    def matches(self, doc):
        """Yield ``(start, end, label)`` for every match in ``doc``."""
        words = doc.words
        for s_start, s_end in doc.sentences:
            sent = words[s_start:s_end]
            i = 0
            while i < len(sent):
                length, label = self.longest_match(sent, i)
                if length == 0:
                    i += 1
                    continue
                if length > 1 or not self.multitoken_only:
                    yield s_start + i, s_start + i + length, label
                i += length

    def spans(self, doc):
        for start, end, label in self.matches(doc):
            yield start, end, {label: 1.0}


def _split_entry(entry, default):
    # a 2-tuple ending in a string is (surface, label) unless a default label
    # was given and the tuple is itself a two-word token sequence
    if isinstance(entry, tuple) and len(entry) == 2 and isinstance(entry[1], str):
        if not isinstance(entry[0], str) or default is None:
            return entry
    return entry, default


def build_gazetteer(entries, label=None, case="sensitive", multitoken_only=False, name="gazetteer"):
    """Build a gazetteer from surface forms.

    ``entries`` holds either strings / token sequences (all tagged with
    ``label``) or ``(surface, label)`` pairs. Strings are split on
    whitespace. Repeating an entry with the same label is harmless; a
    different label raises ``ValueError``.
    """
    gaz = Gazetteer(name, case, multitoken_only)
    for entry in entries:
        entry, entry_label = _split_entry(entry, label)
        if entry_label is None:
            raise ValueError(f"no label given for gazetteer entry {entry!r}")
        words = entry.split() if isinstance(entry, str) else list(entry)
        gaz.add(words, entry_label)
    return gaz


def read_gazetteer_file(path):
    """Parse ``surface<TAB>LABEL`` lines; blank lines and ``#`` comments are skipped."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
                raise ValueError(f"{path}:{lineno}: expected 'surface<TAB>LABEL'")
            entries.append((parts[0].strip(), parts[1].strip()))
    return entries


def load_gazetteer(path, case="sensitive", multitoken_only=False, name=None):
    entries = read_gazetteer_file(path)
    return build_gazetteer(entries, case=case, multitoken_only=multitoken_only, name=name or str(path))
