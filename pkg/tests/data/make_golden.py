"""Regenerate golden/ from the seeded mock pipeline on fixture_200.jsonl."""

import shutil
from pathlib import Path

from streamsparse.cli import main

here = Path(__file__).parent
out = here / "golden"
shutil.rmtree(out, ignore_errors=True)
fixture = str(here / "fixture_200.jsonl")
for cmd in ("classify", "plan", "synthesize"):
    assert main([cmd, "--input", fixture, "--out-dir", str(out), "--seed", "7"]) == 0
assert main(["richness", "--input", str(out / "augmented.jsonl"), "--out-dir", str(out), "--seed", "7"]) == 0
print(sorted(p.name for p in out.iterdir()))
