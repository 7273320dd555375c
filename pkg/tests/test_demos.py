import shutil
import subprocess
import sys
from pathlib import Path

import pytest

DEMOS = Path(__file__).parent.parent / "demos"


@pytest.mark.parametrize("script", sorted(p.name for p in DEMOS.glob("*.py")))
def test_demo_runs(script):
    proc = subprocess.run([sys.executable, str(DEMOS / script)], capture_output=True, text=True,
                          timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip()


@pytest.mark.skipif(shutil.which("softforce") is None, reason="console script not installed")
def test_cli_pipeline_demo(tmp_path):
    proc = subprocess.run(["sh", str(DEMOS / "pipeline_cli.sh"), str(tmp_path)],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert "weights: 1.0\t0.1\t0.0" in proc.stdout
