#!/usr/bin/env python3
"""Regenerate the golden JSON fixtures under tests/golden/.

Run after any intentional change to wire formats or seeded numerics, then
review the diff before committing.
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from test_server import golden_responses  # noqa: E402


def main() -> None:
    golden_dir = ROOT / "tests" / "golden"
    golden_dir.mkdir(exist_ok=True)
    for name, body in golden_responses().items():
        path = golden_dir / f"{name}.json"
        path.write_text(json.dumps({"body": body}, indent=2, sort_keys=True) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
