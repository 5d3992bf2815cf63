"""Regenerates mini_corpus.json.

Outputs are computed by the plain Python functions below, written
independently of the Rust interpreter; loading the corpus checks the
bundled reference programs against them.
"""
import json
import random

TASKS = [
    ("m001", "Reverse the order of the elements.", "reverse",
     lambda xs: xs[::-1]),
    ("m002", "Sort the elements in ascending order and remove duplicates.", "sort | unique",
     lambda xs: sorted(set(xs))),
    ("m003", "Keep only the even elements.", "filter_even",
     lambda xs: [x for x in xs if x % 2 == 0]),
    ("m004", "Keep the first three elements.", "take 3",
     lambda xs: xs[:3]),
    ("m005", "Add 2 to every element.", "add 2",
     lambda xs: [x + 2 for x in xs]),
    ("m006", "Output the number of elements.", "length",
     lambda xs: [len(xs)]),
    ("m007", "Move the first element to the end.", "rotate_left 1",
     lambda xs: xs[1:] + xs[:1]),
    ("m008", "Keep the elements greater than 5, largest first.", "filter_gt 5 | sort | reverse",
     lambda xs: sorted([x for x in xs if x > 5], reverse=True)),
    ("m009", "Put 0 at the start and 9 at the end.", "prepend 0 | append 9",
     lambda xs: [0] + xs + [9]),
    ("m010", "Output the largest element.", "max",
     lambda xs: [max(xs)] if xs else []),
]


def main():
    rng = random.Random(20240611)
    tasks = []
    for task_id, description, program, fn in TASKS:
        examples = []
        for i in range(11):
            # first example is never empty so trial-one guesses are scored on data
            length = rng.randint(1 if i == 0 else 0, 7)
            xs = [rng.randint(0, 15) for _ in range(length)]
            examples.append({"input": xs, "output": fn(xs)})
        tasks.append({
            "id": task_id,
            "description": description,
            "examples": examples,
            "reference_program": program,
        })
    with open("mini_corpus.json", "w") as f:
        f.write(render(tasks))


def render(tasks):
    out = ['{"tasks": [']
    for t, task in enumerate(tasks):
        out.append("  {")
        out.append(f'   "id": {json.dumps(task["id"])},')
        out.append(f'   "description": {json.dumps(task["description"])},')
        out.append(f'   "reference_program": {json.dumps(task["reference_program"])},')
        out.append('   "examples": [')
        for i, ex in enumerate(task["examples"]):
            sep = "," if i < len(task["examples"]) - 1 else ""
            out.append(f'    {json.dumps(ex)}{sep}')
        out.append("   ]")
        out.append("  }" + ("," if t < len(tasks) - 1 else ""))
    out.append("]}")
    return "\n".join(out) + "\n"


if __name__ == "__main__":
    main()
