"""The numba and pure-numpy backends must agree. Each runs in its own interpreter."""
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import ROOT

PROBE = r"""
import json, sys
import numpy as np
from mrfabrics import kernels, load_scenario, run
from mrfabrics.multi_robot import Fleet
from mrfabrics.rollout import RolloutConfig, rollout_arrays

sc = load_scenario(sys.argv[1])
fleet = Fleet(sc.models, sc.static)
packed = fleet.pack_params([r.params(r.goals[0].position) for r in sc.robots])
rng = np.random.default_rng(0)
start = np.stack([r.start.q for r in sc.robots])
acc, roll = [], []
for _ in range(20):
    Q = start + rng.uniform(-0.3, 0.3, start.shape)
    QD = rng.normal(scale=0.3, size=start.shape)
    acc.append(fleet.accels(Q, QD, packed).tolist())
    rr = rollout_arrays(fleet, Q, QD, packed, RolloutConfig(K=10))
    roll.append(rr.q.tolist())
m, traj = run(sc.with_overrides(mode="rf"))
print(json.dumps({"backend": kernels.BACKEND, "acc": acc, "roll": roll,
                  "final": traj.q[-1].tolist(), "steps": len(traj),
                  "success": m.success, "events": len(m.deadlock_events)}))
"""


def probe(no_numba: bool, scenario):
    env = dict(os.environ, MRFABRICS_NO_NUMBA="1" if no_numba else "0")
    p = subprocess.run([sys.executable, "-c", PROBE, str(scenario)], cwd=ROOT, env=env,
                       capture_output=True, text=True, timeout=600)
    assert p.returncode == 0, p.stderr
    return json.loads(p.stdout)


@pytest.fixture(scope="module")
def both(tmp_path_factory):
    path = tmp_path_factory.mktemp("sc") / "head_on_short.scn"
    text = (ROOT / "scenarios" / "head_on.scn").read_text().replace("t_max 70", "t_max 8")
    path.write_text(text)
    return probe(False, path), probe(True, path)


def test_environment_flag_selects_backend(both):
    nb, np_ = both
    assert nb["backend"] == "numba" and np_["backend"] == "numpy"


def test_accelerations_agree(both):
    nb, np_ = both
    np.testing.assert_allclose(nb["acc"], np_["acc"], rtol=1e-9, atol=1e-9)


def test_rollouts_agree(both):
    nb, np_ = both
    np.testing.assert_allclose(nb["roll"], np_["roll"], rtol=1e-9, atol=1e-9)


def test_closed_loop_runs_agree(both):
    nb, np_ = both
    assert nb["steps"] == np_["steps"] and nb["events"] == np_["events"]
    assert nb["success"] == np_["success"]
    np.testing.assert_allclose(nb["final"], np_["final"], atol=1e-6)
