"""Writes the demo task under demo/: dataset, mock scenario and run config.

The scenario scripts ten iterations of five candidate workflows. Each one
answers from a partial lookup table and falls back to the executor model,
which only knows some of the capitals.
"""
import json
import os
import random
import sys

CAPITALS = [
    ("France", "Paris"), ("Japan", "Tokyo"), ("Kenya", "Nairobi"), ("Peru", "Lima"),
    ("Norway", "Oslo"), ("Egypt", "Cairo"), ("Chile", "Santiago"), ("Ghana", "Accra"),
    ("Nepal", "Kathmandu"), ("Cuba", "Havana"), ("Spain", "Madrid"), ("Iran", "Tehran"),
    ("Mali", "Bamako"), ("Laos", "Vientiane"), ("Fiji", "Suva"),
]
VALIDATION = 10
EXECUTOR_KNOWS = {"France", "Egypt", "Cuba", "Spain"}
ITERATIONS = 10
M = 5

PROGRAM = '''def workflow(agent, task):
    known = {known}
    for country, city in known.items():
        if country in task:
            return {{"answer": city}}
    replies = agent.call_llm([{{"role": "user", "content": task}}], 0.0, 1, "Geographer",
                             "Reply with the city name only.")
    return {{"answer": replies[0].strip()}}
'''


def question(country):
    return f"What is the capital of {country}?"


def main(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "dataset.jsonl"), "w") as f:
        for i, (country, city) in enumerate(CAPITALS):
            split = "validation" if i < VALIDATION else "test"
            f.write(json.dumps({"id": f"c{i}", "input": question(country), "gold": city, "split": split}) + "\n")

    rng = random.Random(4)
    steps = []
    for it in range(ITERATIONS):
        responses = []
        for k in range(M):
            size = min(VALIDATION, 1 + it // 2 + rng.randint(0, 3))
            known = dict(rng.sample(CAPITALS[:VALIDATION], size))
            src = PROGRAM.format(known=json.dumps(dict(sorted(known.items()))))
            analysis = f"Iteration {it + 1}, variant {k}: keep a table of {size} capitals and ask the model otherwise."
            responses.append(f"{analysis}\n\n```python\n{src}```\n")
        steps.append({"responses": responses})
    rules = [{"contains": [f"capital of {c}"], "responses": [city]} for c, city in CAPITALS if c in EXECUTOR_KNOWS]
    scenario = {"steps": steps, "executor": {"rules": rules, "default": ["I am not sure."]}}
    with open(os.path.join(out_dir, "scenario.json"), "w") as f:
        json.dump(scenario, f, indent=1)
        f.write("\n")

    config = {
        "task": {"id": "capitals", "family": "qa", "metric": "accuracy",
                 "description_text": "Name the capital city of the country in the question.",
                 "answer_schema": "a city name"},
        "dataset_path": "dataset.jsonl",
        "runtime_command": ["python3", "-I", "-S", "../tools/w4s_runtime.py"],
        "meta_backend": {"kind": "mock", "scenario_path": "scenario.json"},
        "executor_backend": {"kind": "mock", "scenario_path": "scenario.json"},
        "iterations": ITERATIONS,
        "m": M,
        "workers": 2,
        "seed": 0,
        "runs_dir": "runs",
    }
    with open(os.path.join(out_dir, "config.json"), "w") as f:
        json.dump(config, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "demo"))
