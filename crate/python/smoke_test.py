"""Smoke test for the pyioncavity extension.

Builds the extension if needed, loads it from a temporary directory and
exercises every exported function on small problems.

    python3 python/smoke_test.py [path/to/libpyioncavity.so]
"""

import importlib.util
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent

SHORT = """
[analysis]
pulse_window_us = 12.0
dark_tail_us = 5.0
suppression_window_us = 13.5
g2_range_us = 100.0

[[sequence.segments]]
label = "drive"
duration_us = 12.0
drive_on = true

[[sequence.segments]]
label = "wait"
duration_us = 10.0
drive_on = false

[[sequence.segments]]
label = "reset"
duration_us = 5.0
drive_on = false
reset = true
"""


def locate():
    if len(sys.argv) > 1:
        return Path(sys.argv[1])
    subprocess.run(
        ["cargo", "build", "--release", "-p", "ioncavity-python", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    return ROOT / "target" / "release" / "libpyioncavity.so"


def load(lib, workdir):
    target = Path(workdir) / "pyioncavity.so"
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("pyioncavity", target)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main():
    with tempfile.TemporaryDirectory() as tmp:
        m = load(locate(), tmp)

        canon = m.validate_config(None)
        assert "format_version = 1" in canon
        try:
            m.validate_config("[system]\ng0 = 1.0\n")
        except ValueError as e:
            assert "g0" in str(e)
        else:
            raise AssertionError("unknown key accepted")

        eff = m.effective_parameters()
        omega_khz = eff["omega_eff"] / (2 * math.pi) * 1e3
        assert abs(omega_khz - 71.64) < 0.05, omega_khz

        a = m.trajectory(7, 3, SHORT)
        assert a == m.trajectory(7, 3, SHORT)
        assert all(0.0 <= t < 27.0 for t, _ in a)

        times, labels, pops, efficiency = m.master_equation(SHORT)
        assert len(labels) == 8 and len(pops) == len(times)
        assert all(abs(sum(p) - 1.0) < 1e-8 for p in pops)
        assert 0.0 < efficiency < 1.0

        summary = m.run(str(Path(tmp) / "bundle"), SHORT, "trajectory", 5, 2000)
        assert summary["mode"] == "trajectory"
        assert int(summary["n_trials"]) == 2000
        assert (Path(tmp) / "bundle" / "clicks.csv").exists()

    print("smoke test passed")


if __name__ == "__main__":
    main()
