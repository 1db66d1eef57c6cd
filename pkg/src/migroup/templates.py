"""Prompt templates and role-aware rendering.

A template is an instruction string with optional ``{question}`` and
``{context}`` slots. Rendering is deterministic and role-aware:

* ``unimodal1``: question + options + modality-1 text, no media
* ``unimodal2``: question + options + media, modality-1 text omitted
* ``multimodal``: all parts

Options are appended verbatim, one per line, in input order.
"""

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import InputError
from .types import InstructionInstance, MediaRef, ROLES


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    instruction: str

    @property
    def wants_context(self) -> bool:
        return "{context}" in self.instruction

    @property
    def wants_question(self) -> bool:
        return "{question}" in self.instruction


@dataclass(frozen=True)
class PromptRecord:
    """A rendered prompt: text plus an optional out-of-band media handle."""

    template_id: str
    role: str
    text: str
    media: MediaRef | None = None

    def cache_text(self) -> str:
        """Canonical string for cache keying (media handled separately)."""
        return self.text


# Per-dataset instruction templates used by the shipped roster and demo data.
_BUILTIN_TEMPLATES = {
    "default": "Answer the question.\nQuestion: {question}",
    "default_context": "Answer the question using the context.\nContext: {context}\nQuestion: {question}",
    "slake": "Answer the question in a single word, Question: {question}",
    "vqa": "You are given an image and a question. Answer the question in a single word. Question: {question}",
    "vqarad": "You are given a radiology image and a question. Answer the question in a single word.\nQuestion: {question}",
    "pathvqa": "You are given a pathology image and a question. Answer the question in a single word.\nQuestion: {question}",
    "ok-vqa": "You are given an image and a question. Answer the question in a single word. Question: {question}",
    "nlvr": 'Given an image and a related question, answer with a single word: either "true" or "false".\nQuestion: {question}',
    "flickr30k": "A picture of {context}.",
    "scienceqa": (
        "You are given a question and a set of answer choices. Contextual information and an image are "
        "provided to assist in understanding the question. Your task is to choose the best answer from "
        "the choices. Return the selected choice exactly as it appears.\nquestion: {question}\ncontext: {context}\nAnswer:"
    ),
    "ucmerced": (
        "You are given an image. Classify whether it belongs to one of the following categories: "
        "mediumresidential, buildings, tenniscourt, denseresidential, baseballdiamond, intersection, "
        "harbor, parkinglot, river, overpass, mobilehomepark, runway, forest, beach, freeway, airplane, "
        "storagetanks, chaparral, golfcourse, sparseresidential, agricultural. Choose one class from the list."
    ),
    "resisc45": (
        "You are given an image. Classify whether it belongs to one of the following categories: "
        "basketball_court, overpass, ground_track_field, church, chaparral, forest, parking_lot, "
        "golf_course, baseball_diamond, meadow, beach, sparse_residential, desert, terrace, palace, "
        "bridge, commercial_area, stadium, runway, lake, railway, tennis_court, ship, intersection, "
        "river, freeway, airplane, industrial_area, mountain, storage_tank, cloud, roundabout, wetland, "
        "mobile_home_park, island, harbor, railway_station, medium_residential, sea_ice, "
        "thermal_power_station, snowberg, circular_farmland, airport, dense_residential, "
        "rectangular_farmland. Choose a class from the above list."
    ),
    "enrico": (
        "You are given a screenshot of a mobile application's user interface. Choose the most "
        "appropriate design topic from the following comma-separated options: bare, dialer, camera, "
        "chat, editor, form, gallery, list, login, maps, mediaplayer, menu, modal, news, other, "
        "profile, search, settings, terms, tutorial."
    ),
    "mmimdb": (
        "You are given a movie poster and its corresponding plot. Select the appropriate genres from "
        "the following comma-separated list: drama, comedy, romance, thriller, crime, action, "
        "adventure, horror, documentary, mystery, sci-fi, fantasy, family, biography, war, history, "
        "music, animation, musical, western, sport, short, film-noir.\nPlot: {context}\n"
        "Note: A movie may belong to multiple genres. Provide all applicable genres, separated by commas."
    ),
    "fer2013": (
        "Given a photo of a face, determine the facial expression. Choose from the following options: "
        "angry, disgust, fear, happy, neutral, sad, surprise. Answer in a single word."
    ),
    "ny_cartoon": (
        'You are given a cartoon image and a caption. Start your answer with "Yes" if the caption is '
        "funny, or \"No\" if it is not.\nCaption: {context}"
    ),
    "memecap": (
        "This is a meme with the following title and image description. {context} "
        "What is the meme poster trying to convey?\nAnswer:"
    ),
    "memotion": (
        "You are given a meme image and its caption. Describe the emotion the meme expresses in a "
        "single word.\nCaption: {context}"
    ),
    "hateful_memes": (
        "You are given an image. The image and the accompanying text phrase may appear innocuous "
        "individually, but together may convey a hateful message.\nText phrase: {context}\n"
        'Judge whether the combination of image and text is hateful. Begin your answer with either '
        '"yes" or "no", where "yes" indicates the meme is hateful and "no" indicates it is not.\nAnswer:'
    ),
    "inaturalist": "The scientific species name of the species present in the image is:",
    "decimer": "Simplified molecular-input line-entry system (SMILES) notation of the given molecule:",
    "magicbrush": "Edit the given image based on the provided instruction.\nInstruction: {question}",
    "lncoco": "Generate an image based on the provided caption.\nCaption: {context}",
    "screen2words": "Describe the mobile user interface screenshot in one sentence.",
}


class TemplateRegistry:
    def __init__(self):
        self._templates: dict[str, PromptTemplate] = {}

    def register(self, template: PromptTemplate) -> None:
        self._templates[template.template_id] = template

    def get(self, template_id: str) -> PromptTemplate:
        try:
            return self._templates[template_id]
        except KeyError:
            raise InputError(f"prompt template {template_id!r} is not registered") from None

    def ids(self) -> list[str]:
        return sorted(self._templates)

    def load_file(self, path: Path) -> None:
        """Merge corpus-local templates from a JSON file {template_id: instruction}."""
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(obj, dict):
            raise InputError(f"template file {path} must hold an object of id -> instruction")
        for template_id, instruction in obj.items():
            self.register(PromptTemplate(template_id, instruction))


DEFAULT_TEMPLATES = TemplateRegistry()
for _tid, _instr in _BUILTIN_TEMPLATES.items():
    DEFAULT_TEMPLATES.register(PromptTemplate(_tid, _instr))


def render_prompt(
    template_id: str,
    instance: InstructionInstance,
    role: str,
    *,
    registry: TemplateRegistry = DEFAULT_TEMPLATES,
    ablate_question_in_unimodal2: bool = False,
) -> PromptRecord:
    """Render the prompt for one instance under one model role."""
    if role not in ROLES:
        raise InputError(f"unknown role {role!r}")
    template = registry.get(template_id)

    include_context = role != "unimodal2"
    context = instance.modality1 if include_context else ""
    if template.wants_context and include_context and instance.modality1 is None:
        raise InputError(
            f"instance {instance.instance_id!r}: template {template_id!r} needs field 'modality1' "
            f"for role {role!r}"
        )

    question = instance.question
    if role == "unimodal2" and ablate_question_in_unimodal2:
        question = ""

    text = template.instruction
    if template.wants_question:
        text = text.replace("{question}", question)
    if template.wants_context:
        text = text.replace("{context}", context or "")
    elif context:
        # modality-1 text is part of the role's input even when the
        # template has no explicit slot for it
        text = text + "\n" + context
    if instance.options:
        text = text + "\n" + "\n".join(instance.options)

    media = None
    if role in ("unimodal2", "multimodal"):
        if instance.modality2 is None:
            if role == "unimodal2":
                raise InputError(
                    f"instance {instance.instance_id!r}: role 'unimodal2' needs field 'modality2'"
                )
        else:
            media = instance.modality2
    return PromptRecord(template_id=template_id, role=role, text=text, media=media)
