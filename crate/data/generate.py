"""Regenerates the toy corpus and benchmark sets in this directory.

Sentences are built from four slots (subject, verb, object, place) drawn
from one of two topics. Each corpus line is a sentence followed by " | " and
a short summary made of the keywords of two of its slots, so a model trained
on it learns to continue an input with a description of it. Graded pairs share k slots within a topic (human
score k + 1) or come from different topics (score 0).
"""
import random

TOPICS = {
    "kitchen": {
        "subject": ["the chef", "my grandmother", "the baker", "a young cook", "the waiter", "our neighbour"],
        "verb": ["bakes", "stirs", "roasts", "slices", "simmers", "tastes"],
        "object": ["fresh bread", "tomato soup", "garlic butter", "apple pie", "onion stew", "sweet pancakes"],
        "place": ["in the oven", "on the stove", "with olive oil", "for dinner", "before lunch", "in a copper pan"],
    },
    "space": {
        "subject": ["the astronaut", "the telescope", "a lonely pilot", "the old rocket", "the probe", "mission control"],
        "verb": ["orbits", "observes", "launches", "tracks", "circles", "scans"],
        "object": ["the red planet", "distant stars", "a bright comet", "the silver moon", "frozen asteroids", "a spiral galaxy"],
        "place": ["at midnight", "beyond the clouds", "through the dark sky", "near jupiter", "after liftoff", "in deep orbit"],
    },
}
SLOTS = ["subject", "verb", "object", "place"]
SEPARATOR = " | "


def keyword(phrase):
    return max(phrase.split(), key=len)


def sentence(topic, choice):
    return " ".join(TOPICS[topic][s][choice[s]] for s in SLOTS)


def random_choice(rng):
    return {s: rng.randrange(6) for s in SLOTS}


def main():
    rng = random.Random(20240607)
    corpus = []
    for topic in TOPICS:
        for _ in range(400):
            c = random_choice(rng)
            picked = sorted(rng.sample(range(4), 2))
            summary = " ".join(keyword(TOPICS[topic][SLOTS[i]][c[SLOTS[i]]]) for i in picked)
            corpus.append(sentence(topic, c) + SEPARATOR + summary)
    rng.shuffle(corpus)
    with open("toy_corpus.txt", "w") as f:
        f.write("\n".join(corpus) + "\n")

    pairs = []
    for k in range(5):
        for i in range(6):
            topic = list(TOPICS)[i % 2]
            a = random_choice(rng)
            shared = set(rng.sample(SLOTS, k))
            b = {s: a[s] if s in shared else (a[s] + 1 + rng.randrange(5)) % 6 for s in SLOTS}
            pairs.append((sentence(topic, a), sentence(topic, b), k + 1))
    for i in range(10):
        ta, tb = ("kitchen", "space") if i % 2 == 0 else ("space", "kitchen")
        pairs.append((sentence(ta, random_choice(rng)), sentence(tb, random_choice(rng)), 0))
    rng.shuffle(pairs)
    with open("pairs.tsv", "w") as f:
        f.write("id\ttext_a\ttext_b\tscore\n")
        for n, (a, b, s) in enumerate(pairs):
            f.write(f"p{n:02d}\t{a}\t{b}\t{s}\n")

    with open("choice.tsv", "w") as f:
        f.write("id\tcontext\tpositive\tnegative\n")
        for n in range(20):
            topic, other = ("kitchen", "space") if n % 2 == 0 else ("space", "kitchen")
            c = random_choice(rng)
            shared = set(rng.sample(SLOTS, 2))
            p = {s: c[s] if s in shared else (c[s] + 1 + rng.randrange(5)) % 6 for s in SLOTS}
            f.write(f"c{n:02d}\t{sentence(topic, c)}\t{sentence(topic, p)}\t{sentence(other, random_choice(rng))}\n")


if __name__ == "__main__":
    main()
