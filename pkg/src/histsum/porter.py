"""Porter suffix-stripping stemmer (original 1980 algorithm).

Self-contained so that the optional stemming flag of the scoring module
carries no external dependency.  Operates on single lowercase words.
"""


def _is_cons(word, i):
    ch = word[i]
    if ch in "aeiou":
        return False
    if ch == "y":
        return i == 0 or not _is_cons(word, i - 1)
    return True


def _measure(word):
    # number of VC sequences in the [C](VC)^m[V] decomposition
    m = 0
    prev_vowel = False
    for i in range(len(word)):
        if _is_cons(word, i):
            if prev_vowel:
                m += 1
            prev_vowel = False
        else:
            prev_vowel = True
    return m


def _has_vowel(word):
    return any(not _is_cons(word, i) for i in range(len(word)))


def _ends_double_cons(word):
    return len(word) >= 2 and word[-1] == word[-2] and _is_cons(word, len(word) - 1)


def _ends_cvc(word):
    n = len(word)
    if n < 3:
        return False
    return (
        _is_cons(word, n - 3)
        and not _is_cons(word, n - 2)
        and _is_cons(word, n - 1)
        and word[-1] not in "wxy"
    )


def _step1a(w):
    if w.endswith("sses"):
        return w[:-2]
    if w.endswith("ies"):
        return w[:-2]
    if w.endswith("ss"):
        return w
    if w.endswith("s"):
        return w[:-1]
    return w


def _step1b_cleanup(w):
    if w.endswith(("at", "bl", "iz")):
        return w + "e"
    if _ends_double_cons(w) and w[-1] not in "lsz":
        return w[:-1]
    if _measure(w) == 1 and _ends_cvc(w):
        return w + "e"
    return w


def _step1b(w):
    if w.endswith("eed"):
        if _measure(w[:-3]) > 0:
            return w[:-1]
        return w
    for suf in ("ed", "ing"):
        if w.endswith(suf):
            stem = w[: -len(suf)]
            if _has_vowel(stem):
                return _step1b_cleanup(stem)
            return w
    return w


def _step1c(w):
    if w.endswith("y") and _has_vowel(w[:-1]):
        return w[:-1] + "i"
    return w


_STEP2 = (
    ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
    ("izer", "ize"), ("abli", "able"), ("alli", "al"), ("entli", "ent"),
    ("eli", "e"), ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
    ("ator", "ate"), ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
    ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
)

_STEP3 = (
    ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
    ("ical", "ic"), ("ful", ""), ("ness", ""),
)

_STEP4 = (
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
    "ment", "ent", "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
)


def _longest_match(w, rules):
    best = None
    for suf, repl in rules:
        if w.endswith(suf) and (best is None or len(suf) > len(best[0])):
            best = (suf, repl)
    return best


def _step2(w):
    hit = _longest_match(w, _STEP2)
    if hit:
        suf, repl = hit
        stem = w[: -len(suf)]
        if _measure(stem) > 0:
            return stem + repl
    return w


def _step3(w):
    hit = _longest_match(w, _STEP3)
    if hit:
        suf, repl = hit
        stem = w[: -len(suf)]
        if _measure(stem) > 0:
            return stem + repl
    return w


def _step4(w):
    hit = _longest_match(w, [(s, "") for s in _STEP4])
    if hit:
        suf, _ = hit
        stem = w[: -len(suf)]
        if _measure(stem) > 1:
            if suf == "ion" and not stem.endswith(("s", "t")):
                return w
            return stem
    return w


def _step5a(w):
    if w.endswith("e"):
        stem = w[:-1]
        m = _measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            return stem
    return w


def _step5b(w):
    if _measure(w) > 1 and _ends_double_cons(w) and w.endswith("l"):
        return w[:-1]
    return w


def porter_stem(word):
    """Stem one word.  Words of length <= 2 are returned unchanged."""
    word = word.lower()
    if len(word) <= 2:
        return word
    for step in (_step1a, _step1b, _step1c, _step2, _step3, _step4, _step5a, _step5b):
        word = step(word)
    return word
