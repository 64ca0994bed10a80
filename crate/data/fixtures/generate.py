"""Regenerates the fixture tables in this directory.

Oracle tables (*.table) use the plain-text format read by
FiniteHypothesisTable::parse. Backend fixtures (*.json) use the table
backend format: per-context conditional log-probs plus unconditional
log-probs.
"""
import json
import math


def fmt(v):
    return repr(float(v))


def write_table(name, comment, labels, codes, losses):
    lines = [f"# {comment}", "hypotheses\t" + "\t".join(labels), "code\t" + "\t".join(fmt(c) for c in codes)]
    lines += ["loss\t" + "\t".join(fmt(v) for v in row) for row in losses]
    with open(name, "w") as f:
        f.write("\n".join(lines) + "\n")


def codes_of(weights):
    total = sum(weights)
    return [-math.log(w / total) for w in weights]


def oracle_tables():
    write_table(
        "separable.table",
        "two hypotheses, each perfect for one sample; uniform code",
        ["h1", "h2"],
        [math.log(2), math.log(2)],
        [[0.0, 10.0], [10.0, 0.0]],
    )
    write_table(
        "ten.table",
        "ten hypotheses with graded codes and unrelated losses",
        [f"h{j}" for j in range(10)],
        codes_of([0.2, 0.15, 0.12, 0.1, 0.1, 0.09, 0.08, 0.07, 0.05, 0.04]),
        [
            [0.5, 3.0, 1.2, 4.0, 2.5, 0.1, 5.0, 2.0, 3.5, 1.0],
            [4.0, 0.8, 2.2, 0.3, 3.0, 4.5, 1.5, 0.2, 2.8, 3.3],
        ],
    )
    write_table(
        "three_samples.table",
        "three samples over four hypotheses",
        ["sky", "sea", "sand", "snow"],
        codes_of([0.4, 0.3, 0.2, 0.1]),
        [[0.2, 1.5, 3.0, 2.0], [1.8, 0.3, 1.0, 4.0], [2.5, 2.0, 0.4, 0.9]],
    )
    write_table(
        "ties.table",
        "tied losses and tied codes",
        ["a", "b", "c", "d"],
        [math.log(4)] * 4,
        [[1.0, 1.0, 2.0, 3.0], [3.0, 2.0, 1.0, 1.0]],
    )
    write_table(
        "subnormal_code.table",
        "code masses summing to less than one",
        ["x", "y", "z", "w", "v", "u"],
        [1.0, 1.5, 2.0, 2.5, 3.0, 3.5],
        [[0.0, 0.7, 1.4, 2.1, 2.8, 3.5], [3.5, 2.8, 2.1, 1.4, 0.7, 0.0]],
    )
    write_table(
        "identical.table",
        "two samples with the same loss row",
        ["p", "q", "r"],
        codes_of([0.5, 0.3, 0.2]),
        [[0.3, 1.2, 2.0], [0.3, 1.2, 2.0]],
    )


def normalized(weights, floor_count, floor):
    """Log-probs of `weights` scaled to leave room for `floor_count` floor entries."""
    mass = 1.0 - floor_count * math.exp(floor)
    total = sum(weights)
    return [math.log(w / total * mass) for w in weights]


def trajectory_fixture():
    # Two-token descriptions with a floor of -20 nats per token.
    floor = -40.0
    own1 = normalized([0.6, 0.4], 2, floor)
    own2 = normalized([0.7, 0.3], 2, floor)
    descs = ["red ball", "red kite", "blue boat", "blue bird"]
    fixture = {
        "id": "trajectory-floor",
        "conditional": {
            "x1": dict(zip(descs, own1 + [floor, floor])),
            "x2": dict(zip(descs, [floor, floor] + own2)),
        },
        "unconditional": {d: math.log(0.25) for d in descs},
    }
    with open("trajectory_floor.json", "w") as f:
        json.dump(fixture, f, indent=2, sort_keys=True)
        f.write("\n")


def scenes_fixture():
    descs = ["dog", "beach", "sand", "running", "cat", "sofa", "sleeping", "animal", "outdoors", "indoors"]
    contexts = {
        "a dog runs on the beach": [8, 6, 3, 5, 0.2, 0.1, 0.2, 3, 4, 0.1],
        "a puppy plays in the sand": [7, 3, 6, 3, 0.2, 0.1, 0.3, 3, 4, 0.1],
        "a cat sleeps on a sofa": [0.2, 0.1, 0.1, 0.2, 8, 6, 5, 3, 0.1, 4],
        "a kitten naps indoors": [0.2, 0.1, 0.1, 0.1, 7, 3, 6, 3, 0.1, 6],
    }
    conditional = {c: dict(zip(descs, normalized(w, 0, 0.0))) for c, w in contexts.items()}
    unconditional = dict(zip(descs, normalized([3, 2, 2, 2, 3, 2, 2, 4, 2, 2], 0, 0.0)))
    fixture = {"id": "scenes", "conditional": conditional, "unconditional": unconditional}
    with open("scenes.json", "w") as f:
        json.dump(fixture, f, indent=2, sort_keys=True)
        f.write("\n")
    with open("scenes_pairs.tsv", "w") as f:
        f.write("id\ttext_a\ttext_b\tscore\n")
        f.write("s0\ta dog runs on the beach\ta puppy plays in the sand\t4\n")
        f.write("s1\ta cat sleeps on a sofa\ta kitten naps indoors\t4\n")
        f.write("s2\ta dog runs on the beach\ta cat sleeps on a sofa\t1\n")
        f.write("s3\ta puppy plays in the sand\ta kitten naps indoors\t0\n")
    with open("scenes_choice.tsv", "w") as f:
        f.write("id\tcontext\tpositive\tnegative\n")
        f.write("k0\ta dog runs on the beach\ta dog runs on the beach\ta cat sleeps on a sofa\n")
        f.write("k1\ta kitten naps indoors\ta kitten naps indoors\ta puppy plays in the sand\n")


if __name__ == "__main__":
    oracle_tables()
    trajectory_fixture()
    scenes_fixture()
