import json
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parents[2]
DEMO_ANSWERS = REPO_ROOT / "demo" / "stub_answers.json"
WIRE_SCHEMAS = REPO_ROOT / "src" / "migroup" / "fixtures" / "wire"


def load_schema(name: str) -> dict:
    return json.loads((WIRE_SCHEMAS / name).read_text(encoding="utf-8"))
