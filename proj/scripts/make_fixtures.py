#!/usr/bin/env python3
"""Regenerates the bundled desk-scale data fixtures under data/.

Everything is derived from fixed seeds so the fixtures are reproducible.
The four "languages" are synthetic but script-realistic: en uses real and
compound English words, ar/zh use Arabic/CJK codepoints, id uses Latin
syllable words. Word groups are aligned across languages through the
lexicon, which makes the offline translation channels bijective.
"""

import json
import random
import os

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "data")

N_GROUPS = 500

EN_BASE = """stone river light cloud forest ember wind shadow flame meadow harbor
mountain valley spark crystal thunder breeze marble silver copper garden
bridge lantern hollow amber winter summer autumn spring raven falcon heron
willow cedar birch maple acorn moss fern tide wave coral reef dune prairie
canyon mesa glacier fjord delta marsh bay cove cliff ridge summit slope
trail path gate tower keep hall forge anvil hammer chisel loom spindle
wheel cart plow sickle barley wheat oat rye clover thistle bramble briar
hazel rowan alder aspen pine spruce fir larch yew oak elm ash beech
lake pond brook creek spring well cistern channel sluice weir mill kiln
hearth ember ash soot smoke mist fog dew frost hail sleet snow rain
storm gale squall calm lull dusk dawn noon night star moon sun comet
meteor nebula orbit axis pole compass sextant chart map atlas globe
north south east west upland lowland heath moor fen bog swamp glade
grove copse thicket hedge furrow field croft yard paddock byre stable""".split()


def dedup(words):
    seen = set()
    out = []
    for w in words:
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


def make_english(rng):
    base = dedup(EN_BASE)
    words = list(base)
    i = 0
    while len(words) < N_GROUPS:
        a = base[rng.randrange(len(base))]
        b = base[rng.randrange(len(base))]
        w = a + b
        if w not in words and a != b:
            words.append(w)
        i += 1
        if i > 100000:
            raise RuntimeError("compound generation stalled")
    return words[:N_GROUPS]


AR_LETTERS = [chr(c) for c in range(0x0627, 0x063B)] + [chr(c) for c in range(0x0641, 0x064B)]
CJK_POOL = [chr(0x4E00 + 7 * k) for k in range(160)]
ID_SYLLABLES = ["ka", "ra", "ta", "ma", "su", "ri", "ba", "la", "ne", "po",
                "gu", "di", "sa", "wo", "mi", "te", "nu", "ja", "be", "lo"]


def make_arabic(rng, n):
    out = []
    seen = set()
    while len(out) < n:
        w = "".join(rng.choice(AR_LETTERS) for _ in range(rng.randrange(3, 6)))
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


def make_chinese(rng, n):
    out = []
    seen = set()
    while len(out) < n:
        w = "".join(rng.choice(CJK_POOL) for _ in range(rng.randrange(1, 3)))
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


def make_indonesian(rng, n):
    out = []
    seen = set()
    while len(out) < n:
        w = "".join(rng.choice(ID_SYLLABLES) for _ in range(rng.randrange(2, 4)))
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


def variant(lang, word, rng):
    if lang == "en":
        return word + "s"
    if lang == "ar":
        return word + rng.choice(AR_LETTERS)
    if lang == "zh":
        return word + rng.choice(CJK_POOL)
    return word + "nya"


def escape_non_ascii(s):
    out = []
    for ch in s:
        cp = ord(ch)
        if cp < 128:
            out.append(ch)
        else:
            out.append("\\u%04x" % cp)
    return "".join(out)


def markov_text(rng, inventory, successors, length):
    word = rng.choice(inventory)
    words = [word]
    for _ in range(length - 1):
        if rng.random() < 0.7:
            word = rng.choice(successors[word])
        else:
            word = rng.choice(inventory)
        words.append(word)
    return " ".join(words)


def main():
    rng = random.Random(20250809)
    langs = ["en", "ar", "zh", "id"]

    groups = {"en": make_english(rng)}
    groups["ar"] = make_arabic(rng, N_GROUPS)
    groups["zh"] = make_chinese(rng, N_GROUPS)
    groups["id"] = make_indonesian(rng, N_GROUPS)

    variants = {}
    for lang in langs:
        vrng = random.Random(77 + langs.index(lang))
        vs = []
        seen = set(groups[lang])
        for w in groups[lang]:
            v = variant(lang, w, vrng)
            while v in seen:
                v = variant(lang, v, vrng)
            seen.add(v)
            vs.append(v)
        variants[lang] = vs

    os.makedirs(DATA, exist_ok=True)
    os.makedirs(os.path.join(DATA, "fixtures"), exist_ok=True)
    os.makedirs(os.path.join(DATA, "judge"), exist_ok=True)
    os.makedirs(os.path.join(DATA, "configs"), exist_ok=True)

    # Lexicon: en<TAB>xx per group plus synonym edges inside each language.
    with open(os.path.join(DATA, "lexicon.tsv"), "w", encoding="utf-8") as f:
        f.write("# bundled 4-language test lexicon (en/ar/zh/id), one pair per line\n")
        for g in range(N_GROUPS):
            for lang in ("ar", "zh", "id"):
                f.write("%s\t%s\n" % (groups["en"][g], groups[lang][g]))
            for lang in langs:
                f.write("%s\t%s\n" % (groups[lang][g], variants[lang][g]))

    # Per-language synonym groups (primary + variant).
    for lang in langs:
        with open(os.path.join(DATA, "synonyms_%s.tsv" % lang), "w", encoding="utf-8") as f:
            for g in range(N_GROUPS):
                f.write("%s\t%s\n" % (groups[lang][g], variants[lang][g]))

    # Bilingual word tables for the offline translation channels.
    for lang in ("ar", "zh", "id"):
        with open(os.path.join(DATA, "translate_en_%s.tsv" % lang), "w", encoding="utf-8") as f:
            for g in range(N_GROUPS):
                f.write("%s\t%s\n" % (groups["en"][g], groups[lang][g]))
                f.write("%s\t%s\n" % (variants["en"][g], variants[lang][g]))

    # Vocabulary: <eot> at id 0, then the sorted union of all surface forms.
    inventory = {lang: groups[lang] + variants[lang] for lang in langs}
    all_words = sorted(set(w for lang in langs for w in inventory[lang]))
    vocab_lines = ["<eot>"] + all_words
    with open(os.path.join(DATA, "vocab_multi.txt"), "w", encoding="utf-8") as f:
        f.write("\n".join(vocab_lines) + "\n")
    with open(os.path.join(DATA, "vocab_multi_escaped.txt"), "w", encoding="utf-8") as f:
        f.write("\n".join(escape_non_ascii(l) for l in vocab_lines) + "\n")

    # Markov corpora per language.
    for lang in langs:
        crng = random.Random(900 + langs.index(lang))
        inv = inventory[lang]
        successors = {w: [crng.choice(inv) for _ in range(6)] for w in inv}
        with open(os.path.join(DATA, "fixtures", "c4like_%s.jsonl" % lang), "w",
                  encoding="utf-8") as f:
            for _ in range(260):
                text = markov_text(crng, inv, successors, crng.randrange(60, 111))
                f.write(json.dumps({"text": text}, ensure_ascii=False) + "\n")

    # Tiny ingest fixtures.
    with open(os.path.join(DATA, "fixtures", "c4_tiny.jsonl"), "w", encoding="utf-8") as f:
        for text in ("stone river light cloud forest ember wind shadow flame meadow",
                     "harbor mountain valley spark crystal thunder breeze marble silver copper",
                     "garden bridge lantern hollow amber winter summer autumn spring raven"):
            f.write(json.dumps({"text": text}) + "\n")

    qrng = random.Random(31)
    with open(os.path.join(DATA, "fixtures", "lfqa_tiny.jsonl"), "w", encoding="utf-8") as f:
        inv = inventory["en"]
        for _ in range(8):
            q = " ".join(qrng.choice(inv) for _ in range(8))
            a = " ".join(qrng.choice(inv) for _ in range(40))
            f.write(json.dumps({"question": q, "answer": a}) + "\n")

    print("fixtures written to", os.path.abspath(DATA))


if __name__ == "__main__":
    main()
