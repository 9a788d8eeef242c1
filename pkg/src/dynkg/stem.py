"""Fixed suffix-stripping stemmer for the knowledge-base overlap check.

Implements the classic Porter rule set (steps 1a-5b over the measure of
vowel-consonant runs), preceded by a small irregular-verb lookup so common
past forms collapse onto their base ("went" -> "go").  Both pieces are
frozen: the overlap statistics are only meaningful if every run stems
identically.
"""

from __future__ import annotations

_VOWELS = "aeiou"

# Irregular forms normalized before the suffix rules run.
IRREGULAR = {
    "am": "be", "are": "be", "is": "be", "was": "be", "were": "be", "been": "be",
    "ate": "eat", "eaten": "eat",
    "became": "become",
    "began": "begin", "begun": "begin",
    "bought": "buy",
    "broke": "break", "broken": "break",
    "brought": "bring",
    "built": "build",
    "came": "come",
    "caught": "catch",
    "chose": "choose", "chosen": "choose",
    "did": "do", "done": "do", "does": "do",
    "drank": "drink", "drunk": "drink",
    "drew": "draw", "drawn": "draw",
    "drove": "drive", "driven": "drive",
    "fell": "fall", "fallen": "fall",
    "felt": "feel",
    "flew": "fly", "flown": "fly",
    "forgot": "forget", "forgotten": "forget",
    "fought": "fight",
    "found": "find",
    "froze": "freeze", "frozen": "freeze",
    "gave": "give", "given": "give",
    "goes": "go", "went": "go", "gone": "go",
    "got": "get", "gotten": "get",
    "grew": "grow", "grown": "grow",
    "had": "have", "has": "have",
    "heard": "hear",
    "held": "hold",
    "hid": "hide", "hidden": "hide",
    "kept": "keep",
    "knew": "know", "known": "know",
    "laid": "lay",
    "led": "lead",
    "left": "leave",
    "lent": "lend",
    "lost": "lose",
    "made": "make",
    "meant": "mean",
    "met": "meet",
    "paid": "pay",
    "ran": "run",
    "rang": "ring", "rung": "ring",
    "rode": "ride", "ridden": "ride",
    "rose": "rise", "risen": "rise",
    "said": "say",
    "sang": "sing", "sung": "sing",
    "sat": "sit",
    "saw": "see", "seen": "see",
    "sent": "send",
    "slept": "sleep",
    "sold": "sell",
    "sought": "seek",
    "spent": "spend",
    "spoke": "speak", "spoken": "speak",
    "stood": "stand",
    "stole": "steal", "stolen": "steal",
    "swam": "swim", "swum": "swim",
    "taken": "take", "took": "take",
    "taught": "teach",
    "thought": "think",
    "threw": "throw", "thrown": "throw",
    "told": "tell",
    "understood": "understand",
    "wept": "weep",
    "woke": "wake", "woken": "wake",
    "won": "win",
    "wore": "wear", "worn": "wear",
    "wrote": "write", "written": "write",
}


def _is_consonant(word: str, i: int) -> bool:
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        return i == 0 or not _is_consonant(word, i - 1)
    return True


def _measure(stem: str) -> int:
    """Number of vowel-to-consonant transitions ([C](VC)^m[V])."""
    m = 0
    prev_vowel = False
    for i in range(len(stem)):
        if _is_consonant(stem, i):
            if prev_vowel:
                m += 1
            prev_vowel = False
        else:
            prev_vowel = True
    return m


def _has_vowel(stem: str) -> bool:
    return any(not _is_consonant(stem, i) for i in range(len(stem)))


def _ends_double_consonant(stem: str) -> bool:
    return (
        len(stem) >= 2
        and stem[-1] == stem[-2]
        and _is_consonant(stem, len(stem) - 1)
    )


def _ends_cvc(stem: str) -> bool:
    if len(stem) < 3:
        return False
    return (
        _is_consonant(stem, len(stem) - 3)
        and not _is_consonant(stem, len(stem) - 2)
        and _is_consonant(stem, len(stem) - 1)
        and stem[-1] not in "wxy"
    )


def _replace(word: str, suffix: str, repl: str, min_measure: int) -> str | None:
    if word.endswith(suffix):
        stem = word[: len(word) - len(suffix)]
        if _measure(stem) > min_measure:
            return stem + repl
    return None


_STEP2 = [
    ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
    ("izer", "ize"), ("abli", "able"), ("alli", "al"), ("entli", "ent"),
    ("eli", "e"), ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
    ("ator", "ate"), ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
    ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
]

_STEP3 = [
    ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
    ("ical", "ic"), ("ful", ""), ("ness", ""),
]

_STEP4 = [
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
    "ment", "ent", "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
]


def stem(word: str) -> str:
    """Stem one lowercase word."""
    word = word.lower()
    if word in IRREGULAR:
        return IRREGULAR[word]
    if len(word) <= 2:
        return word

    # step 1a
    if word.endswith("sses"):
        word = word[:-2]
    elif word.endswith("ies"):
        word = word[:-2]
    elif not word.endswith("ss") and word.endswith("s"):
        word = word[:-1]

    # step 1b
    if word.endswith("eed"):
        if _measure(word[:-3]) > 0:
            word = word[:-1]
    else:
        flag = False
        if word.endswith("ed") and _has_vowel(word[:-2]):
            word = word[:-2]
            flag = True
        elif word.endswith("ing") and _has_vowel(word[:-3]):
            word = word[:-3]
            flag = True
        if flag:
            if word.endswith(("at", "bl", "iz")):
                word += "e"
            elif _ends_double_consonant(word) and not word.endswith(("l", "s", "z")):
                word = word[:-1]
            elif _measure(word) == 1 and _ends_cvc(word):
                word += "e"

    # step 1c
    if word.endswith("y") and _has_vowel(word[:-1]):
        word = word[:-1] + "i"

    # step 2
    for suffix, repl in _STEP2:
        out = _replace(word, suffix, repl, 0)
        if out is not None:
            word = out
            break

    # step 3
    for suffix, repl in _STEP3:
        out = _replace(word, suffix, repl, 0)
        if out is not None:
            word = out
            break

    # step 4
    for suffix in _STEP4:
        if word.endswith(suffix):
            stem_part = word[: len(word) - len(suffix)]
            if suffix == "ion" and not stem_part.endswith(("s", "t")):
                break
            if _measure(stem_part) > 1:
                word = stem_part
            break

    # step 5a
    if word.endswith("e"):
        stem_part = word[:-1]
        m = _measure(stem_part)
        if m > 1 or (m == 1 and not _ends_cvc(stem_part)):
            word = stem_part

    # step 5b
    if _measure(word) > 1 and _ends_double_consonant(word) and word.endswith("l"):
        word = word[:-1]

    return word
