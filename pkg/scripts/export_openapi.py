"""Regenerate openapi.json from the service's route definitions.

Run from the repository root after changing service routes:

    python3 scripts/export_openapi.py
"""

import json
import tempfile
from pathlib import Path

from tcfdlens.config import AppConfig
from tcfdlens.service import create_app


def main() -> None:
    out_path = Path(__file__).resolve().parent.parent / "openapi.json"
    with tempfile.TemporaryDirectory() as scratch:
        app = create_app(AppConfig(workspace=scratch))
        schema = app.openapi()
    out_path.write_text(json.dumps(schema, indent=2, sort_keys=True) + "\n", "utf-8")
    print(f"Wrote {out_path}")


if __name__ == "__main__":
    main()
