"""Read-only data fixtures: transcribed published numbers and the training roster."""

import json
from importlib import resources

from ..types import DatasetDescriptor


def _read(name: str) -> str:
    return resources.files("migroup.fixtures").joinpath(name).read_text("utf-8")


def load_training_roster() -> tuple[list[DatasetDescriptor], dict[str, list[str]]]:
    """The 18 training datasets (with published interaction labels) and group lists.

    Descriptor instance counts are zero placeholders; the roster carries
    labels and template bindings, not data.
    """
    obj = json.loads(_read("training_datasets.json"))
    descriptors = [
        DatasetDescriptor(
            dataset_id=d["dataset_id"],
            name=d["name"],
            domain_tag=d["domain_tag"],
            instance_count=0,
            prompt_template_id=d["prompt_template_id"],
            declared_interaction=d["declared_interaction"],
        )
        for d in obj["datasets"]
    ]
    return descriptors, obj["published_groups"]
