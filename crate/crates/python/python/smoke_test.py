"""Smoke test for the spme extension module.

Builds the cdylib with cargo (unless SPME_SKIP_BUILD is set), copies it next to
this script as an importable module, and exercises the main entry points.
"""

import json
import math
import os
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

HERE = Path(__file__).resolve().parent
ROOT = HERE.parents[2]


def load():
    if not os.environ.get("SPME_SKIP_BUILD"):
        subprocess.run(["cargo", "build", "--release", "-p", "spme-python"], cwd=ROOT, check=True)
    lib = ROOT / "target" / "release" / ("libspme.dylib" if sys.platform == "darwin" else "libspme.so")
    staging = Path(tempfile.mkdtemp())
    shutil.copy(lib, staging / "spme.so")
    sys.path.insert(0, str(staging))
    import spme

    return spme


def main():
    spme = load()

    g = spme.Grid(1, [1.0], [999])
    assert len(g) == 999
    eig, eig_h, e1 = g.eigenmode([1])
    assert abs(eig - math.pi**2) < 1e-12
    assert abs(g.mass(e1) - 2 * math.sqrt(2) / math.pi) < 1e-3
    assert abs(g.critical_measure(e1, math.sqrt(2) * math.sin(math.pi / 4)) - 0.5) < 2 * g.h[0]

    reg = spme.Regularization(0.01)
    assert reg.psi(0.005) == 0.5 and reg.psi(-0.03) == -1.0
    assert abs(reg.phi_prime(0.03) - 1.01) < 1e-14
    try:
        spme.Regularization(1.5)
    except ValueError as err:
        assert "lambda" in str(err)
    else:
        raise AssertionError("lambda = 1.5 accepted")

    small = spme.Grid(1, [1.0], [99])
    noise = spme.NoiseModel(small, [1.0], [[1]])
    assert abs(max(noise.tilde_mu()) - 2.0) < 1e-3

    cfg = spme.RunConfig()
    cfg.n = [63]
    cfg.t_end = 0.02
    cfg.record_stride = 20
    assert spme.RunConfig.from_toml(cfg.to_toml()).hash() == cfg.hash()
    traj = spme.run_path(cfg, 7)
    assert traj["t"][0] == 0.0 and abs(traj["t"][-1] - 0.02) < 1e-12
    assert len(traj["mass_K"][0]) == 1
    assert min(traj["min_x"]) >= 0.0

    with tempfile.TemporaryDirectory() as out:
        cfg.paths = 3
        manifest = spme.run_ensemble(cfg, out)
        rows = [json.loads(line) for line in spme.report(manifest)]
        assert rows[0]["paths_ok"] == 3

    print("spme python smoke test ok")


if __name__ == "__main__":
    main()
