"""Secondary-component gate: run the expert console's scripted live-server
session (frontend/test/e2e.test.ts) through vitest when the toolchain is
available."""

import shutil
import subprocess
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parents[1]
FRONTEND = REPO / "frontend"


@pytest.mark.skipif(shutil.which("npx") is None, reason="node toolchain not available")
@pytest.mark.skipif(not (FRONTEND / "node_modules").exists(),
                    reason="frontend dependencies not installed (npm install)")
def test_console_end_to_end_session():
    result = subprocess.run(
        ["npx", "vitest", "run", "test/e2e.test.ts"],
        cwd=FRONTEND, capture_output=True, text=True, timeout=300,
    )
    print(result.stdout[-2000:])
    tail = result.stdout + result.stderr
    assert result.returncode == 0, tail[-2000:]
    assert "skipped" not in tail.lower() or "4 passed" in tail
