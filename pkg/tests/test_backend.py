import os
import subprocess
import sys

import relaxround


def _backend(env_value):
    env = dict(os.environ)
    env.pop("RELAXROUND_PURE_PYTHON", None)
    if env_value is not None:
        env["RELAXROUND_PURE_PYTHON"] = env_value
    out = subprocess.run(
        [sys.executable, "-c", "import relaxround; print(relaxround.BACKEND)"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return out.stdout.strip()


def test_environment_variable_forces_fallback():
    assert _backend("1") == "python"


def test_default_backend_is_reported():
    assert _backend(None) in ("compiled", "python")
    assert relaxround.BACKEND in ("compiled", "python")


def test_fallback_backend_runs_the_cli(tmp_path):
    env = dict(os.environ, RELAXROUND_PURE_PYTHON="1")
    cmd = [sys.executable, "-m", "relaxround.cli", "solve", "--nx", "30", "--out", str(tmp_path / "o")]
    assert subprocess.run(cmd, env=env, capture_output=True).returncode == 0
    assert (tmp_path / "o" / "summary.json").exists()
