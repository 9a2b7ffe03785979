"""Regenerate the checked-in replay suite under tests/fixtures/suite/.

Each sample below describes a tiny world: what the detectors see, what the
VQA models say, the caption, and how the LLM plans and judges. The script
runs every ablation configuration against that world through recording
backends, so the stores hold exactly the requests the pipeline makes.

    python tests/fixtures/make_fixtures.py
"""

from __future__ import annotations

import dataclasses
import json
import re
import sys
from pathlib import Path

from planscript.bench import ABLATIONS, parse_sample
from planscript.config import Settings, default_backends
from planscript.gateway import CallableBackend, FixtureStore, Gateway, RecordingBackend, normalize_query
from planscript.pipeline import PipelineOptions, run_pipeline
from planscript.planner import TaskRepository

SUITE = Path(__file__).resolve().parent / "suite"

GRASS_QUESTION = "Is there any grass in the picture that is not tall?"
GRASS_SCRIPT = """BOX0=LOC(image=IMAGE,object='grass')
IMAGE0=CROP(image=IMAGE,box=BOX0)
ANSWER0=VQA(image=IMAGE0,question='Is the grass tall?')
ANSWER1=EVAL(expr="{ANSWER0} == 'no'")
FINAL_ANSWER=RESULT(var=ANSWER1)"""

PEOPLE_QUESTION = "Do both people have the same gender?"
PEOPLE_SCRIPT = """BOX0=LOC(image=IMAGE,object='person')
IMAGE0=CROP(image=IMAGE,box=BOX0)
IMAGE1=CROP(image=IMAGE,box=BOX0)
ANSWER0=VQA(image=IMAGE0,question='What is the gender of this person?')
ANSWER1=VQA(image=IMAGE1,question='What is the gender of this person?')
ANSWER2=EVAL(expr='{ANSWER0} == {ANSWER1}')
FINAL_ANSWER=RESULT(var=ANSWER2)"""
PEOPLE_CAPTION = "A boy and a girl standing side by side in a park."


def img(name, w=640, h=480):
    return {"id": name, "width": w, "height": h}


def same(*boxes):
    return {"*": list(boxes)}


def chat(script: str) -> str:
    return f"Sure, here is the program:\n```\n{script}\n```\nHope this helps!"


def verdict_reply(answer: str | None) -> str:
    if answer is None:
        return ("1. No, the caption does not mention anything that answers the question.\n"
                "2. The program's answer is the only evidence.\n3. Keep the program's answer.")
    return (f"1. Yes, the caption mentions the relevant details.\n"
            f"2. The caption supports \"{answer}\".\n3. \"{answer}\"")


WORLD = [
    dict(id="gqa-grass", task_kind="gqa", images=[img("grass.jpg")], question=GRASS_QUESTION, answer="no",
         plan=chat(GRASS_SCRIPT),
         detect={"grass": same([0, 240, 640, 480, 0.9])},
         vqa={"Is the grass tall?": "yes"},
         caption="A field of tall green grass under a blue sky.", clue="no"),
    dict(id="gqa-people", task_kind="gqa", images=[img("people.jpg", 800, 600)], question=PEOPLE_QUESTION,
         answer="no", plan=PEOPLE_SCRIPT,
         detect={"person": same([100, 100, 300, 500, 0.9], [500, 100, 700, 500, 0.85])},
         vqa={("people.jpg@100,100,300,500", "What is the gender of this person?"): "female",
              ("people.jpg@500,100,700,500", "What is the gender of this person?"): "male"},
         caption=PEOPLE_CAPTION, clue="no"),
    dict(id="gqa-cat-sofa", task_kind="gqa", images=[img("livingroom.jpg")],
         question="Is there a cat to the left of the sofa?", answer="yes",
         plan="""BOX0=LOC(image=IMAGE,object='sofa')
IMAGE0=CROP_LEFTOF(image=IMAGE,box=BOX0)
BOX1=LOC(image=IMAGE0,object='cat')
ANSWER0=COUNT(box=BOX1)
ANSWER1=EVAL(expr='{ANSWER0} > 0')
FINAL_ANSWER=RESULT(var=ANSWER1)""",
         detect={"sofa": same([300, 200, 600, 400, 0.92]), "cat": same([50, 250, 150, 350, 0.8])},
         vqa={}, caption="A grey cat sits on the floor next to a brown sofa.", clue="yes"),
    dict(id="gqa-car-color", task_kind="gqa", images=[img("street.jpg")], question="What color is the car?",
         answer="red",
         plan="""BOX0=LOC(image=IMAGE,object='car')
IMAGE0=CROP(image=IMAGE,box=BOX0)
ANSWER0=VQA(image=IMAGE0,question='What color is the car?')
FINAL_ANSWER=RESULT(var=ANSWER0)""",
         detect={"car": same([120, 200, 380, 360, 0.88])},
         vqa={"What color is the car?": "red"}, caption="A street with a parked car.", clue=None),
    dict(id="gqa-cups", task_kind="gqa", images=[img("kitchen.jpg")], question="How many cups are on the table?",
         answer="3",
         plan="""BOX0=LOC(image=IMAGE,object='table')
IMAGE0=CROP(image=IMAGE,box=BOX0)
BOX1=LOC(image=IMAGE0,object='cup')
ANSWER0=COUNT(box=BOX1)
FINAL_ANSWER=RESULT(var=ANSWER0)""",
         detect={"table": same([40, 200, 600, 460, 0.95]),
                 "cup": {"owlvit": [[20, 20, 60, 70, 0.7], [100, 20, 140, 70, 0.66], [200, 30, 240, 80, 0.6]],
                         "owlv2_base": [[22, 21, 61, 70, 0.75], [101, 19, 141, 71, 0.7], [201, 31, 241, 80, 0.5]],
                         "owlv2_large": [[19, 20, 60, 69, 0.8], [99, 20, 140, 70, 0.72]]}},
         vqa={}, caption="A kitchen table with several cups.", clue=None),
    dict(id="gqa-hat", task_kind="gqa", images=[img("man.jpg")], question="Is the man wearing a hat?", answer="yes",
         plan="""BOX0=LOC(image=IMAGE,object='man')
IMAGE0=CROP(image=IMAGE,box=BOX0)
ANSWER0=VQA(image=IMAGE0,question='Is the man wearing a hat?')
ANSWER1=EVAL(expr="{ANSWER0} == 'yes'")
FINAL_ANSWER=RESULT(var=ANSWER1)""",
         detect={"man": same([200, 50, 420, 470, 0.93])},
         vqa={"Is the man wearing a hat?": {"blip": "yes", "vilt": "yes", "paligemma": "no"}},
         caption="A man in a straw hat smiling at the camera.", clue="yes"),
    dict(id="gqa-birds", task_kind="gqa", images=[img("birds.jpg")], question="Are there fewer than 3 birds?",
         answer="yes",
         plan="""BOX0=LOC(image=IMAGE,object='bird')
ANSWER0=COUNT(box=BOX0)
ANSWER1=EVAL(expr='{ANSWER0} < 3')
FINAL_ANSWER=RESULT(var=ANSWER1)""",
         detect={"bird": same([30, 40, 90, 100, 0.8], [400, 60, 470, 120, 0.77])},
         vqa={}, caption="Two birds flying over the sea.", clue="yes"),
    dict(id="gqa-lamp", task_kind="gqa", images=[img("bedroom.jpg")], question="Is the lamp above the bed?",
         answer="yes",
         plan="""BOX0=LOC(image=IMAGE,object='bed')
IMAGE0=CROP_ABOVE(image=IMAGE,box=BOX0)
BOX1=LOC(image=IMAGE0,object='lamp')
ANSWER0=COUNT(box=BOX1)
ANSWER1=EVAL(expr='{ANSWER0} > 0')
FINAL_ANSWER=RESULT(var=ANSWER1)""",
         detect={"bed": same([100, 250, 540, 470, 0.9]), "lamp": same([280, 20, 360, 120, 0.7])},
         vqa={}, caption="A bedroom with a bed.", clue=None),
    dict(id="gqa-tree-broken", task_kind="gqa", images=[img("park.jpg")], question="Which side is the tree on?",
         answer="left",
         plan="ANSWER0=VQA(image=IMAGE,question='Which side is the tree on?'\nFINAL_ANSWER=RESULT(var=ANSWER0)",
         detect={}, vqa={"Which side is the tree on?": "left"}, caption="A park with a tree.", clue=None),
    dict(id="gqa-plate", task_kind="gqa", images=[img("dinner.jpg")], question="What material is the plate made of?",
         answer="ceramic",
         plan="""BOX0=LOC(image=IMAGE,object='plate')
IMAGE0=CROP(image=IMAGE,box=BOX0)
ANSWER0=VQA(image=IMAGE0,question='What material is the plate made of?')
FINAL_ANSWER=RESULT(var=ANSWER0)""",
         detect={"plate": same([150, 150, 450, 400, 0.9])},
         vqa={"What material is the plate made of?": {"blip": "glass", "vilt": "ceramic", "paligemma": "ceramic"}},
         caption="Dinner served on a white plate.", clue=None),
    dict(id="vqav2-holding", task_kind="vqav2", images=[img("rain.jpg")], question="What is the man holding?",
         answer="umbrella",
         plan="ANSWER0=VQA(image=IMAGE,question='What is the man holding?')\nFINAL_ANSWER=RESULT(var=ANSWER0)",
         detect={}, vqa={"What is the man holding?": "umbrella"},
         caption="A man holding an umbrella in the rain.", clue="umbrella"),
    dict(id="vqav2-dogs", task_kind="vqav2", images=[img("dogs.jpg")], question="What are the dogs doing?",
         answer="playing",
         plan="""BOX0=LOC(image=IMAGE,object='dog')
IMAGE0=CROP(image=IMAGE,box=BOX0)
ANSWER0=VQA(image=IMAGE0,question='What are the dogs doing?')
FINAL_ANSWER=RESULT(var=ANSWER0)""",
         detect={"dog": same([50, 200, 250, 400, 0.9], [350, 210, 560, 420, 0.85])},
         vqa={("dogs.jpg@0,0,640,480", "What are the dogs doing?"): "playing",
              ("dogs.jpg@50,200,250,400", "What are the dogs doing?"): "sitting"},
         caption="Dogs on a lawn.", clue=None),
    dict(id="vqav2-sky", task_kind="vqav2", images=[img("beach.jpg")], question="Is the sky cloudy?", answer="no",
         plan="ANSWER0=VQA(image=IMAGE,question='Is the sky cloudy?')\nFINAL_ANSWER=RESULT(var=ANSWER0)",
         detect={}, vqa={"Is the sky cloudy?": "no"},
         caption="A sunny beach under a clear blue sky.", clue="no"),
    dict(id="mme-dog", task_kind="mme", images=[img("yard.jpg")], question="Is there a dog in this image?",
         answer="yes",
         plan="""BOX0=LOC(image=IMAGE,object='dog')
ANSWER0=COUNT(box=BOX0)
ANSWER1=EVAL(expr='{ANSWER0} > 0')
FINAL_ANSWER=RESULT(var=ANSWER1)""",
         detect={"dog": same([300, 250, 500, 450, 0.82])}, vqa={},
         caption="A dog lying in a yard.", clue="yes"),
    dict(id="mme-car-left", task_kind="mme", images=[img("road.jpg")],
         question="Is the car on the left side of the image?", answer="yes",
         plan="ANSWER0=VQA(image=IMAGE,question='Is the car on the left side of the image?')\n"
              "FINAL_ANSWER=RESULT(var=ANSWER0)",
         detect={}, vqa={"Is the car on the left side of the image?": "yes"},
         caption="A road with a car.", clue=None),
    dict(id="mme-bus", task_kind="mme", images=[img("bus.jpg")], question="Is there a red bus in this image?",
         answer="no",
         plan="ANSWER0=VQA(image=IMAGE,question='Is there a red bus in this image?')\n"
              "FINAL_ANSWER=RESULT(var=ANSWER0)",
         detect={}, vqa={"Is there a red bus in this image?": "yes"},
         caption="A blue bus parked on a quiet street.", clue="no"),
    dict(id="nlvr2-two-dogs", task_kind="nlvr2", images=[img("pair1_l.jpg"), img("pair1_r.jpg")],
         question="There are two dogs in total.", answer="yes",
         plan="""ANSWER0=VQA(image=LEFT,question='How many dogs are in the image?')
ANSWER1=VQA(image=RIGHT,question='How many dogs are in the image?')
ANSWER2=EVAL(expr='{ANSWER0} + {ANSWER1} == 2')
FINAL_ANSWER=RESULT(var=ANSWER2)""",
         detect={}, vqa={("pair1_l.jpg", "How many dogs are in the image?"): "1",
                         ("pair1_r.jpg", "How many dogs are in the image?"): "1"},
         caption=None, clue=None),
    dict(id="nlvr2-one-bird", task_kind="nlvr2", images=[img("pair2_l.jpg"), img("pair2_r.jpg")],
         question="Each image shows exactly one bird.", answer="no",
         plan="""ANSWER0=VQA(image=LEFT,question='How many birds are in the image?')
ANSWER1=VQA(image=RIGHT,question='How many birds are in the image?')
ANSWER2=EVAL(expr='{ANSWER0} == 1 and {ANSWER1} == 1')
FINAL_ANSWER=RESULT(var=ANSWER2)""",
         detect={}, vqa={("pair2_l.jpg", "How many birds are in the image?"): "1",
                         ("pair2_r.jpg", "How many birds are in the image?"): {"blip": "2", "vilt": "2",
                                                                                 "paligemma": "1"}},
         caption=None, clue=None),
    dict(id="video-ball", task_kind="video", images=[img("video1_key.jpg")],
         question="Why did the boy pick up the ball?", answer="to throw it",
         choices=["to throw it", "to eat it", "to hide it"],
         plan="""ANSWER0=VQA(image=IMAGE,question='Why did the boy pick up the ball?')
ANSWER1=SELECT(question='Why did the boy pick up the ball?',evidence=ANSWER0)
FINAL_ANSWER=RESULT(var=ANSWER1)""",
         detect={}, vqa={"Why did the boy pick up the ball?": "he wants to throw it to the dog"},
         caption="A boy playing fetch with a dog in a garden.",
         scores={"he wants to throw it to the dog": [80, 5, 15],
                 "A boy playing fetch with a dog in a garden.": [90, 2, 8]}),
    dict(id="video-woman", task_kind="video", images=[img("video2_key.jpg")],
         question="What does the woman do after sitting down?", answer="drinks coffee",
         choices=["reads a book", "stands up", "drinks coffee"],
         plan="""ANSWER0=VQA(image=IMAGE,question='What does the woman do after sitting down?')
ANSWER1=SELECT(question='What does the woman do after sitting down?',evidence=ANSWER0)
FINAL_ANSWER=RESULT(var=ANSWER1)""",
         detect={}, vqa={"What does the woman do after sitting down?": "she sits on a bench"},
         caption="A woman sitting on a bench drinking a cup of coffee.",
         scores={"she sits on a bench": [40, 35, 25],
                 "A woman sitting on a bench drinking a cup of coffee.": [10, 5, 85]}),
]


class World:
    """Answers model requests from the sample descriptions above."""

    def __init__(self, samples=WORLD):
        self.samples = samples
        self.by_question = {normalize_query(s["question"]): s for s in samples}
        self.by_image = {}
        for s in samples:
            for im in s["images"]:
                self.by_image[im["id"]] = s
            if s["task_kind"] == "nlvr2":
                self.by_image["|".join(im["id"] for im in s["images"])] = s

    def _sample(self, image_id):
        return self.by_image.get(image_id.split("@")[0])

    @staticmethod
    def _pick(entry, backend):
        if isinstance(entry, dict):
            return entry.get(backend, entry.get("*"))
        return entry

    def __call__(self, backend, role, image, query, flags):
        if role == "llm":
            return self.llm(query)
        sample = self._sample(image.id)
        if sample is None:
            return None
        if role == "detector":
            boxes = self._pick(sample["detect"].get(query, {}), backend) or []
            return {"detections": [{"box": b[:4], "score": b[4], "label": query} for b in boxes]}
        if role == "vqa":
            vqa = sample["vqa"]
            base = image.id.split("@")[0]
            for key in ((image.id, query), (base, query), query):
                if key in vqa:
                    return {"answers": [self._pick(vqa[key], backend)]}
            return {"answers": ["unknown"]}
        if role == "caption":
            return {"text": sample["caption"]} if sample.get("caption") else None
        return None

    def llm(self, prompt):
        if prompt.rstrip().endswith("Program:"):
            question = prompt.rstrip().splitlines()[-2][len("Question: "):]
            return {"text": self.by_question[normalize_query(question)]["plan"]}
        fields = dict(re.findall(r"^(Caption|Question|Evidence|Answer produced by the visual program): (.*)$",
                                 prompt, re.MULTILINE))
        sample = self.by_question[normalize_query(fields["Question"])]
        if "Evidence" in fields:
            scores = sample["scores"][fields["Evidence"]]
            return {"text": "\n".join(f"{i}: {s}" for i, s in enumerate(scores, 1))}
        return {"text": verdict_reply(sample.get("clue"))}


def samples_jsonl() -> str:
    rows = []
    for s in WORLD:
        row = {k: s[k] for k in ("id", "task_kind", "images", "question", "answer")}
        if "choices" in s:
            row["choices"] = s["choices"]
        rows.append(json.dumps(row))
    return "\n".join(rows) + "\n"


def build(out: Path = SUITE) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for old in out.glob("*.jsonl"):
        old.unlink()
    (out / "samples.jsonl").write_text(samples_jsonl(), "utf-8")
    world = World()
    specs = default_backends()
    stores = {s.name: FixtureStore(out / f"{s.name}.jsonl", readonly=False) for s in specs}
    recorders = [RecordingBackend(s, stores[s.name], CallableBackend(s, world)) for s in specs]
    repo = TaskRepository.load()
    samples = [parse_sample(json.loads(line)) for line in samples_jsonl().splitlines()]
    for _, flags in ABLATIONS:
        settings = dataclasses.replace(Settings(), **flags)
        gateway = Gateway(recorders, settings.ensemble, settings.use_ensemble)
        options = PipelineOptions(settings.use_ssparser, settings.use_verifier)
        for sample in samples:
            run_pipeline(sample.question, sample.images, gateway, repo, sample.task_kind, options, sample.choices)
    # canonical order so regenerating gives a clean diff
    for path in out.glob("*.jsonl"):
        if path.name == "samples.jsonl":
            continue
        rows = sorted(path.read_text("utf-8").splitlines(), key=lambda r: json.dumps(json.loads(r)["key"], sort_keys=True))
        path.write_text("\n".join(rows) + "\n", "utf-8")


if __name__ == "__main__":
    build(Path(sys.argv[1]) if len(sys.argv) > 1 else SUITE)
