#!/usr/bin/env python3
"""Regenerates the bundled replica fixtures under crates/core/data/.

The fixtures are synthetic stand-ins for a hand-annotated speech transcript:
a 21-utterance training split, a 20-utterance test split with 49 annotated
speaker gestures, recorded theme/rheme spans, recorded LLM exchanges for the
four prompting approaches, and expert appropriateness labels.

Expected alignment counts are computed here by exhaustive matching so the
Rust harness can be checked against an independent implementation.

Usage: python3 scripts/gen_replica_fixtures.py
"""

import itertools
import json
import os

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "data")
TOLERANCE = 2

# (id, text, [(phrase, intent)]) -- one annotation per training utterance.
TRAINING = [
    ("train-01", "We keep moving forward together as working people.", ("moving forward", "Progress")),
    ("train-02", "Every generation has pushed this movement ahead a little further.", ("pushed this movement ahead", "Progress")),
    ("train-03", "Our wages kept advancing because we organized.", ("kept advancing", "Progress")),
    ("train-04", "Some politicians want to take us back to the old days.", ("take us back", "Regress")),
    ("train-05", "Without a contract those protections slide backwards.", ("slide backwards", "Regress")),
    ("train-06", "We cannot return to the way things were before the strike.", ("return to the way things were", "Regress")),
    ("train-07", "It happens again and again, year after year.", ("again and again", "Cycle")),
    ("train-08", "Every shift the same routine repeats itself.", ("the same routine repeats", "Cycle")),
    ("train-09", "Bargaining comes around every few years like clockwork.", ("comes around every few years", "Cycle")),
    ("train-10", "We gathered nurses, teachers, and drivers into one room.", ("gathered nurses, teachers, and drivers", "Collect")),
    ("train-11", "The union brings all of those voices together.", ("brings all of those voices together", "Collect")),
    ("train-12", "We collected thousands of signatures in a week.", ("collected thousands of signatures", "Collect")),
    ("train-13", "Everything is held inside one collective agreement.", ("inside one collective agreement", "Container")),
    ("train-14", "Members pay into a common fund that covers everybody.", ("into a common fund", "Container")),
    ("train-15", "All of these benefits sit within the same package.", ("within the same package", "Container")),
    ("train-16", "Families are torn between a paycheck and caring for a parent.", ("torn between a paycheck and caring", "Oscillation")),
    ("train-17", "People are unsure whether to speak up or stay quiet.", ("whether to speak up or stay quiet", "Oscillation")),
    ("train-18", "Work and family life are badly out of balance.", ("out of balance", "Oscillation")),
    ("train-19", "In the past we fought for the weekend.", ("In the past", "Temporal")),
    ("train-20", "Today we fight for paid leave and fair scheduling.", ("Today", "Temporal")),
    ("train-21", "In the future our children will inherit what we build now.", ("In the future", "Temporal")),
]

# (id, theme text, rheme text, [(phrase, category, intent, occurrence)])
# The theme/rheme boundary is where the two strings are joined.
TEST = [
    ("test-01", "As the workplace has changed,", "you know, we've got new technology, we've got new ways of doing business, but our values have not changed.",
     [("the workplace has changed", "metaphoric", "Temporal"),
      ("new technology", "beat", None),
      ("new ways of doing business", "metaphoric", "Progress"),
      ("our values have not changed", "metaphoric", "Temporal")]),
    ("test-02", "For example, up in New York with SEIU-1199, you know,", "coming together with workers and employers putting a little bit of contribution from each into a trust fund to provide for care.",
     [("up in New York", "deictic", None),
      ("coming together", "metaphoric", "Collect"),
      ("putting a little bit of contribution", "metaphoric", "Collect"),
      ("into a trust fund", "metaphoric", "Container")]),
    ("test-03", "It's kind of risky", "sometimes asking for these things.",
     [("sometimes asking", "beat", None),
      ("these things", "metaphoric", "Container")]),
    ("test-04", "If you don't have the protection of a union,", "you are on your own.",
     [("the protection of a union", "metaphoric", "Container"),
      ("on your own", "metaphoric", "Oscillation")]),
    ("test-05", "Scheduling", "might not be as much of an issue as paid leave, paid sick leave, and paid family leave.",
     [("paid leave,", "beat", None),
      ("paid sick leave,", "beat", None),
      ("paid family leave", "metaphoric", "Container")]),
    ("test-06", "Working families", "are stretched between the job and the kitchen table.",
     [("stretched between the job", "metaphoric", "Oscillation"),
      ("the kitchen table", "iconic", None)]),
    ("test-07", "Together", "we raised the minimum wage in city after city.",
     [("we raised", "deictic", None),
      ("raised the minimum wage", "metaphoric", "Progress"),
      ("city after city", "metaphoric", "Cycle")]),
    ("test-08", "Those gains", "did not fall from the sky.",
     [("did not fall", "iconic", None),
      ("from the sky", "deictic", None)]),
    ("test-09", "Each contract", "builds on the one that came before it.",
     [("builds on", "metaphoric", "Progress"),
      ("came before it", "metaphoric", "Temporal")]),
    ("test-10", "The pandemic", "showed us who keeps this economy running.",
     [("showed us", "beat", None),
      ("keeps this economy running", "metaphoric", "Cycle")]),
    ("test-11", "Child care workers", "are holding the whole system together with very little support.",
     [("holding the whole system together", "metaphoric", "Container"),
      ("very little support", "iconic", None)]),
    ("test-12", "When workers bargain collectively,", "they win better pay and safer jobs.",
     [("workers bargain collectively", "metaphoric", "Collect"),
      ("better pay", "beat", None),
      ("safer jobs", "beat", None)]),
    ("test-13", "Employers", "sometimes push back against every single proposal.",
     [("push back", "metaphoric", "Regress"),
      ("every single proposal", "beat", None)]),
    ("test-14", "Our members", "go back and forth between two or three jobs.",
     [("go back and forth", "metaphoric", "Oscillation"),
      ("two or three jobs", "iconic", None)]),
    ("test-15", "That", "is why we keep organizing year after year.",
     [("keep organizing", "metaphoric", "Progress"),
      ("year after year", "metaphoric", "Cycle")]),
    ("test-16", "This summit", "brings employers and unions into the same room.",
     [("brings employers and unions", "metaphoric", "Collect"),
      ("into the same room", "metaphoric", "Container")]),
    ("test-17", "Paid leave", "should not depend on where you happen to work.",
     [("Paid leave", "beat", None),
      ("where you happen to work", "deictic", None)]),
    ("test-18", "The old model", "left too many people behind.",
     [("left too many people behind", "metaphoric", "Regress"),
      ("too many people", "iconic", None)]),
    ("test-19", "In the future,", "every worker should have a voice on the job.",
     [("the future, every", "metaphoric", "Temporal"),
      ("every worker", "beat", None),
      ("a voice on the job", "metaphoric", "Container")]),
    ("test-20", "So what we are asking for", "is simple: a fair share for everyone who does the work.",
     [("what we are asking for", "beat", None),
      ("a fair share", "metaphoric", "Container"),
      ("everyone who does the work", "deictic", None)]),
]


def tokens_of(text):
    return text.split()


def norm(tok):
    # lowercase, strip non-alphanumeric characters from both ends
    s = tok.lower()
    i, j = 0, len(s)
    while i < j and not s[i].isalnum():
        i += 1
    while j > i and not s[j - 1].isalnum():
        j -= 1
    return s[i:j]


def locate(tokens, phrase):
    """Leftmost exact run, else leftmost normalized run."""
    p = phrase.split()
    n = len(p)
    for i in range(len(tokens) - n + 1):
        if tokens[i:i + n] == p:
            return (i, i + n - 1)
    pn = [norm(t) for t in p]
    for i in range(len(tokens) - n + 1):
        if [norm(t) for t in tokens[i:i + n]] == pn:
            return (i, i + n - 1)
    raise ValueError(f"phrase {phrase!r} not found in {tokens!r}")


def phrase_of(tokens, span):
    words = tokens[span[0]:span[1] + 1]
    return " ".join(norm(w) if k == len(words) - 1 else w for k, w in enumerate(words)).rstrip(",")


def overlaps(a, b):
    return a[0] <= b[1] and b[0] <= a[1]


def gap(a, b):
    return max(0, b[0] - a[1], a[0] - b[1])


def best_matching(props, annos, tol):
    """Exhaustive maximum-cardinality one-to-one matching."""
    best = 0
    m = len(annos)
    for k in range(min(len(props), m), 0, -1):
        for ps in itertools.combinations(range(len(props)), k):
            for perm in itertools.permutations(range(m), k):
                if all(gap(props[p], annos[a]) <= tol for p, a in zip(ps, perm)):
                    return k
    return best


def main():
    os.makedirs(OUT, exist_ok=True)

    # corpus -------------------------------------------------------------
    lines = [{"format": "gesture-corpus", "version": 1,
              "train": [u for u, _, _ in TRAINING],
              "test": [u for u, *_ in TEST]}]
    utt_tokens = {}
    for uid, text, _ in TRAINING:
        lines.append({"utterance_id": uid, "text": text})
        utt_tokens[uid] = tokens_of(text)
    test_text = {}
    for uid, theme, rheme, _ in TEST:
        text = f"{theme} {rheme}"
        test_text[uid] = text
        lines.append({"utterance_id": uid, "text": text})
        utt_tokens[uid] = tokens_of(text)
    for uid, _, (phrase, intent) in TRAINING:
        span = locate(utt_tokens[uid], phrase)
        lines.append({"utterance_id": uid, "span": list(span), "intent": intent,
                      "category": "metaphoric", "split": "train"})
    annotations = []
    for uid, theme, rheme, annos in TEST:
        for phrase, cat, intent in annos:
            span = locate(utt_tokens[uid], phrase)
            annotations.append((uid, span, cat))
            lines.append({"utterance_id": uid, "span": list(span), "intent": intent,
                          "category": cat, "split": "test"})
    with open(os.path.join(OUT, "replica_corpus.jsonl"), "w") as f:
        for rec in lines:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")

    # rheme spans ---------------------------------------------------------
    rheme = {}
    with open(os.path.join(OUT, "replica_rheme.jsonl"), "w") as f:
        for uid, theme, rh, _ in TEST:
            nt = len(tokens_of(theme))
            n = len(utt_tokens[uid])
            rec = {"utterance_id": uid, "theme": [0, nt - 1], "rheme": [nt, n - 1]}
            rheme[uid] = (nt, n - 1)
            f.write(json.dumps(rec) + "\n")

    within = 0
    outside = {}
    contained = 0
    for uid, span, cat in annotations:
        r = rheme[uid]
        if overlaps(span, r):
            within += 1
        else:
            outside[cat] = outside.get(cat, 0) + 1
        if r[0] <= span[0] and span[1] <= r[1]:
            contained += 1
    assert len(annotations) == 49, len(annotations)
    assert within == 43, within
    assert outside == {"deictic": 1, "beat": 2, "metaphoric": 3}, outside

    # recorded exchanges ---------------------------------------------------
    # Each approach proposes a deterministic subset of the speaker's gestures
    # plus its own extra gestures.
    extras = {
        "test-01": ["we've got", "you know,"],
        "test-02": ["with workers and employers", "to provide for care"],
        "test-03": ["It's kind of risky"],
        "test-04": ["If you don't have"],
        "test-05": ["Scheduling"],
        "test-06": ["Working families"],
        "test-07": ["Together"],
        "test-08": ["Those gains"],
        "test-09": ["Each contract"],
        "test-10": ["The pandemic"],
        "test-11": ["Child care workers"],
        "test-12": ["When workers"],
        "test-13": ["Employers"],
        "test-14": ["Our members"],
        "test-15": ["That"],
        "test-16": ["This summit"],
        "test-17": ["Paid leave"],
        "test-18": ["The old model"],
        "test-19": ["every worker should have"],
        "test-20": ["So what"],
    }
    free_names = {"metaphoric": "Open palms sweep", "beat": "Small downward beat",
                  "deictic": "Point outward", "iconic": "Shape the object"}
    recorded = []
    expected = {}
    for approach in range(4):
        both = model_only = speaker_only = 0
        for ti, (uid, theme, rh, annos) in enumerate(TEST):
            toks = utt_tokens[uid]
            ann_spans = [locate(toks, p) for p, _, _ in annos]
            picks = []
            for ai, (phrase, cat, intent) in enumerate(annos):
                key = ti * 7 + ai
                if approach == 0:
                    take = key % 4 == 0
                elif approach == 1:
                    take = cat == "metaphoric" or key % 2 == 0
                elif approach == 2:
                    take = key % 5 != 4
                else:
                    take = cat == "metaphoric" or key % 3 == 0
                if take:
                    name = intent if (approach > 0 and intent) else free_names[cat]
                    if approach == 2 and intent is None:
                        name = "Emphasis"
                    picks.append((phrase, name))
            if approach == 0:
                for e in extras[uid]:
                    picks.append((e, "Point to self"))
            elif approach == 3 and ti % 4 == 0:
                picks.append((extras[uid][0], "Container"))
            elif approach == 1 and ti % 6 == 0:
                picks.append((extras[uid][0], "Progress"))
            elif approach == 2 and ti % 5 == 2:
                picks.append((extras[uid][0], "Handshake"))
            records = []
            for phrase, name in picks:
                rec = {"intent": name, "phrase": phrase.rstrip(",")}
                if approach != 1 or len(records) % 2 == 0:
                    rec["description"] = f"{name.lower()} at chest height"
                records.append(rec)
            body = json.dumps(records, ensure_ascii=False)
            if approach == 0 and ti % 3 == 0:
                raw = "Sure! Here are the gestures I would suggest:\n```json\n" + body + "\n```\nLet me know if you need more."
            elif approach == 2 and ti % 4 == 1:
                raw = "Gestures: " + body
            else:
                raw = body
            recorded.append({"approach": approach, "utterance_id": uid,
                             "utterance": " ".join(toks), "response": raw})
            prop_spans = [locate(toks, r["phrase"]) for r in records]
            b = best_matching(prop_spans, ann_spans, TOLERANCE)
            both += b
            model_only += len(prop_spans) - b
            speaker_only += len(ann_spans) - b
        expected[str(approach)] = {"both": both, "model_only": model_only,
                                   "speaker_only": speaker_only}
    with open(os.path.join(OUT, "recorded_exchanges.jsonl"), "w") as f:
        for rec in recorded:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
    with open(os.path.join(OUT, "recorded_expected.json"), "w") as f:
        json.dump({"tolerance": TOLERANCE, "approaches": expected,
                   "rheme": {"within": within, "outside": 49 - within,
                             "outside_by_category": outside,
                             "contained": contained}},
                  f, indent=2, sort_keys=True)
        f.write("\n")

    # expert labels -------------------------------------------------------
    # Category 1: proposals aligned with a speaker gesture, plus speaker
    # gestures with no corresponding proposal. Category 2: unaligned proposals.
    label_plan = {
        # approach: (cat1 appropriate, cat1 inappropriate, cat1 ncg, cat2 appr, cat2 inappr)
        0: (6, 9, 12, 4, 11),
        1: (14, 4, 8, 9, 1),
        2: (15, 4, 6, 5, 3),
        3: (19, 2, 5, 7, 2),
    }
    with open(os.path.join(OUT, "replica_labels.jsonl"), "w") as f:
        for approach, (a1, i1, n1, a2, i2) in label_plan.items():
            idx = 0
            test_ids = [u for u, *_ in TEST]
            for k, (count, cat, label) in enumerate([
                    (a1, 1, "appropriate"), (i1, 1, "inappropriate"),
                    (n1, 1, "no_corresponding_gesture"), (a2, 2, "appropriate"),
                    (i2, 2, "inappropriate")]):
                for _ in range(count):
                    uid = test_ids[idx % len(test_ids)]
                    rec = {"approach": approach, "utterance_id": uid,
                           "proposal_index": None if label == "no_corresponding_gesture" else idx // len(test_ids),
                           "category": cat, "label": label}
                    f.write(json.dumps(rec) + "\n")
                    idx += 1

    # ten-utterance demo dialogue -------------------------------------------
    with open(os.path.join(OUT, "demo_dialogue.txt"), "w") as f:
        f.write(" ".join(test_text[u] for u, *_ in TEST[:10]) + "\n")

    print(json.dumps(expected, indent=1), within, outside, contained)


if __name__ == "__main__":
    main()
