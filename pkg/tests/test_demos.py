import subprocess
import sys
from pathlib import Path

import pytest

DEMOS = Path(__file__).resolve().parents[1] / "demos"


@pytest.mark.parametrize("script, args", [
    ("01_successor_maps.py", []),
    ("02_context_inference.py", ["--episodes", "60"]),
    ("03_neural_signatures.py", ["--sessions", "2", "--blocks", "1"]),
])
def test_demo_runs(script, args):
    out = subprocess.run([sys.executable, str(DEMOS / script), *args], capture_output=True,
                         text=True, timeout=600)
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip()
