"""How the video branch picks between the VQA answer and the caption.

Both branches score every multiple-choice option. The caption branch only
takes over when its most confident option beats the VQA branch's most
confident option outright; a tie keeps the VQA answer.
"""

from planscript.verifier import AnswerDistribution, select_fuse

CHOICES = ["reads a book", "stands up", "drinks coffee"]

CASES = [
    ("VQA unsure, caption sure", [0.40, 0.35, 0.25], [0.10, 0.05, 0.85]),
    ("VQA sure, caption agrees less", [0.80, 0.05, 0.15], [0.60, 0.10, 0.30]),
    ("equal peaks", [0.50, 0.25, 0.25], [0.25, 0.25, 0.50]),
]


def main():
    for label, p, q in CASES:
        index, overwritten = select_fuse(AnswerDistribution(tuple(p)), AnswerDistribution(tuple(q)))
        source = "caption" if overwritten else "VQA"
        print(f"{label:<32} -> {CHOICES[index]!r} from the {source} branch")


if __name__ == "__main__":
    main()
