"""Repairing a planner mistake before it costs a model call.

A planner asked "Do both people have the same gender?" tends to write a
script that locates people once and crops twice. CROP on a box array keeps
only the first box, so the same person gets asked about twice and the answer
is always "yes". The SS-parser notices the quantifier and rewrites the block.
"""

from planscript.config import default_backends
from planscript.executor import execute, seed_env
from planscript.gateway import CallableBackend, Gateway
from planscript.script import parse_script, render_script
from planscript.ssparser import validate_and_repair
from planscript.values import ImageRef

QUESTION = "Do both people have the same gender?"
PLANNED = """BOX0=LOC(image=IMAGE,object='person')
IMAGE0=CROP(image=IMAGE,box=BOX0)
IMAGE1=CROP(image=IMAGE,box=BOX0)
ANSWER0=VQA(image=IMAGE0,question='What is the gender of this person?')
ANSWER1=VQA(image=IMAGE1,question='What is the gender of this person?')
ANSWER2=EVAL(expr="{ANSWER0} == {ANSWER1}")
FINAL_ANSWER=RESULT(var=ANSWER2)"""


# A toy world: two people, the left one is female and the right one male.
def world(backend, role, image, query, flags):
    if role == "detector":
        boxes = [[100, 100, 300, 500, 0.9], [500, 100, 700, 500, 0.85]] if query == "person" else []
        return {"detections": [{"box": b[:4], "score": b[4], "label": query} for b in boxes]}
    if role == "vqa":
        return {"answers": ["female" if image.id.endswith("@100,100,300,500") else "male"]}
    return None


def main():
    gateway = Gateway([CallableBackend(spec, world) for spec in default_backends()])
    env = seed_env("gqa", [ImageRef("people.jpg", 800, 600)])

    print("As planned, the script answers:", execute(parse_script(PLANNED), env, gateway).final_answer)

    outcome = validate_and_repair(PLANNED, QUESTION)
    print(f"\nSS-parser verdict: {outcome.verdict}")
    for rec in outcome.repairs:
        print(f"  line {rec.line_index}: {rec.rule_id}")
    print("\nRepaired script:")
    print(render_script(outcome.script))

    # validation made no model calls; only now do we pay for detection and VQA
    print("\nRepaired script answers:", execute(outcome.script, env, gateway).final_answer)


if __name__ == "__main__":
    main()
