#!/usr/bin/env python3
"""Regenerate the committed demo corpus under demo/.

Thirty instances across three datasets, with stub answers planted so the
pipeline lands each dataset at one interaction anchor (2 / 1 / 0). Output is
deterministic; run from the repo root after changing anything here.
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from migroup.types import DatasetDescriptor, InstructionInstance, MediaRef, write_dataset

REPO = Path(__file__).resolve().parents[1]
DEMO = REPO / "demo"

CAPTION_ITEMS = [
    ("zebra", "a zebra grazing on dry grass"),
    ("harbor", "sailboats moored in a small harbor"),
    ("bridge", "a stone bridge over a quiet river"),
    ("ambulance", "an ambulance parked outside a clinic"),
    ("telescope", "a telescope pointed at the night sky"),
    ("orchard", "rows of apple trees in an orchard"),
    ("lighthouse", "a lighthouse on a rocky coastline"),
    ("tractor", "a tractor plowing a muddy field"),
    ("glacier", "a glacier descending between two peaks"),
    ("windmill", "an old windmill beside a canal"),
]

SELECT_ITEMS = [
    ("button", ["button", "slider", "chart"]),
    ("slider", ["button", "slider", "chart"]),
    ("chart", ["chart", "menu", "dialog"]),
    ("menu", ["chart", "menu", "dialog"]),
    ("dialog", ["chart", "menu", "dialog"]),
    ("toolbar", ["toolbar", "gallery", "form"]),
    ("gallery", ["toolbar", "gallery", "form"]),
    ("form", ["toolbar", "gallery", "form"]),
    ("login", ["login", "settings", "profile"]),
    ("settings", ["login", "settings", "profile"]),
]

FUSION_ITEMS = [
    ("sarcasm", "What a truly wonderful Monday this is."),
    ("irony", "Nothing says relaxation like a fire alarm."),
    ("praise", "They finally fixed the elevator, and it shows."),
    ("warning", "The bridge looks perfectly safe, locals say."),
    ("humor", "The cat has clearly filed its tax return."),
    ("pride", "Fifteen years of practice led to this moment."),
    ("grief", "Her chair at the cafe stays empty now."),
    ("relief", "The storm passed just before the parade."),
    ("suspicion", "The lights were on, but nobody answered."),
    ("nostalgia", "The arcade still takes the old brass tokens."),
]


def main() -> None:
    corpus = DEMO / "corpus"
    answers: dict[str, dict[str, str]] = {}

    # redundancy-planted: all three roles agree
    instances = []
    for i, (gold, caption) in enumerate(CAPTION_ITEMS, start=1):
        iid = f"cap-{i:04d}"
        instances.append(
            InstructionInstance(
                instance_id=iid,
                question="What is the main subject?",
                gold_answer=gold,
                modality1=caption,
                modality2=MediaRef(uri=f"media/demo_caption/{i:04d}.png"),
            )
        )
        answers[iid] = {"unimodal1": gold, "unimodal2": gold, "multimodal": gold}
    write_dataset(
        corpus,
        DatasetDescriptor(
            dataset_id="demo_caption",
            name="Demo captions",
            domain_tag="multimedia",
            instance_count=len(instances),
            prompt_template_id="demo_caption",
            declared_interaction="redundancy",
            modality1_source="caption",
            modality2_source="image",
        ),
        instances,
    )

    # uniqueness-planted: text-only role agrees, image-only role does not
    instances = []
    for i, (gold, options) in enumerate(SELECT_ITEMS, start=1):
        iid = f"sel-{i:04d}"
        instances.append(
            InstructionInstance(
                instance_id=iid,
                question="Which interface element is described?",
                gold_answer=gold,
                modality1=f"The screen shows a {gold} near the top.",
                modality2=MediaRef(uri=f"media/demo_select/{i:04d}.png"),
                options=tuple(options),
            )
        )
        answers[iid] = {"unimodal1": gold, "unimodal2": "unknown", "multimodal": gold}
    write_dataset(
        corpus,
        DatasetDescriptor(
            dataset_id="demo_select",
            name="Demo UI selection",
            domain_tag="hci",
            instance_count=len(instances),
            prompt_template_id="demo_select",
            declared_interaction="uniqueness",
            modality1_source="screen description",
            modality2_source="screenshot",
        ),
        instances,
    )

    # synergy-planted: neither unimodal role matches the joint answer
    instances = []
    for i, (gold, text) in enumerate(FUSION_ITEMS, start=1):
        iid = f"fus-{i:04d}"
        instances.append(
            InstructionInstance(
                instance_id=iid,
                question="What does the combination convey?",
                gold_answer=gold,
                modality1=text,
                modality2=MediaRef(uri=f"media/demo_fusion/{i:04d}.png"),
            )
        )
        answers[iid] = {"unimodal1": "literal", "unimodal2": "picture", "multimodal": gold}
    write_dataset(
        corpus,
        DatasetDescriptor(
            dataset_id="demo_fusion",
            name="Demo fusion",
            domain_tag="affect",
            instance_count=len(instances),
            prompt_template_id="demo_fusion",
            declared_interaction="synergy",
            modality1_source="overlay text",
            modality2_source="image",
        ),
        instances,
    )

    (corpus / "templates.json").write_text(
        json.dumps(
            {
                "demo_caption": "Answer the question in a single word.\nContext: {context}\nQuestion: {question}",
                "demo_select": "Pick the best option for the interface element shown.\nDescription: {context}\nQuestion: {question}",
                "demo_fusion": "Interpret the combined meaning of the text and the image.\nText: {context}\nQuestion: {question}",
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    (DEMO / "stub_answers.json").write_text(
        json.dumps(answers, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    config = """\
# Demo run config. Start the stub endpoints first:
#   migroup-stub --port 8091 --answers demo/stub_answers.json
corpus_root: corpus
output_root: out
seed: 7
determinism_mode: true
similarity_id: exact_match
parallelism: 4
sampling:
  num_draws: 3
  draw_size: 10
  replacement_within_draw: false
boundaries:
  synergy_upper: 0.5
  uniqueness_upper: 1.5
eval:
  method_id: demo_model
endpoints:
  unimodal1:
    endpoint_url: http://127.0.0.1:8091/v1/chat/completions
    model_id: stub-model
  unimodal2:
    endpoint_url: http://127.0.0.1:8091/v1/chat/completions
    model_id: stub-model
  multimodal:
    endpoint_url: http://127.0.0.1:8091/v1/chat/completions
    model_id: stub-model
"""
    (DEMO / "config.yaml").write_text(config, encoding="utf-8")
    print(f"demo corpus written under {DEMO}")


if __name__ == "__main__":
    main()
