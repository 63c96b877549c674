import sys
import warnings

import numpy as np
import pytest

from conftest import random_mip
from pnn.mip import (
    ExternalSolverError,
    MipModel,
    SolverConfig,
    Status,
    highs_available,
    highs_command,
    parse_solution,
    solve,
    solve_external,
)


def _model():
    m = MipModel("e")
    x = m.add_binary("x")
    y = m.add_continuous("y", 0.0, 2.0)
    m.add_constraint([(1.0, x), (1.0, y)], "L", 2.5)
    m.set_objective([(1.0, x), (1.0, y)], "max")
    return m


def test_parse_solution_reads_values_and_annotations():
    m = _model()
    text = "# status Optimal\n# objective 2.5\n# bound 2.5\nx 1\ny 1.5\nnoise line\n"
    parsed = parse_solution(text, m)
    assert parsed["values"] == {"x": 1.0, "y": 1.5}
    assert parsed["status"] is Status.OPTIMAL
    assert parsed["bound"] == 2.5


def test_parse_solution_infeasible_status():
    parsed = parse_solution("Model status : Infeasible\n", _model())
    assert parsed["status"] is Status.INFEASIBLE and not parsed["values"]


def test_external_via_fake_solver(tmp_path):
    script = tmp_path / "fake.py"
    script.write_text("import sys\nopen(sys.argv[2], 'w').write('optimal\\nx 1\\ny 1.5\\n')\n")
    r = solve_external(_model(), f"{sys.executable} {script} {{mps}} {{sol}}")
    assert r.status is Status.OPTIMAL
    assert r.objective == pytest.approx(2.5)


def test_external_rejects_infeasible_answer(tmp_path):
    script = tmp_path / "bad.py"
    script.write_text("import sys\nopen(sys.argv[2], 'w').write('x 1\\ny 2\\n')\n")
    with pytest.raises(ExternalSolverError):
        solve_external(_model(), f"{sys.executable} {script} {{mps}} {{sol}}")


def test_missing_executable():
    with pytest.raises(ExternalSolverError):
        solve_external(_model(), "definitely-not-a-solver {mps} {sol}")


def test_no_solution_file(tmp_path):
    with pytest.raises(ExternalSolverError):
        solve_external(_model(), f"{sys.executable} -c pass {{mps}} {{sol}}")


@pytest.mark.skipif(not highs_available(), reason="highspy not installed")
def test_highs_matches_embedded():
    rng = np.random.default_rng(77)
    cfg = SolverConfig(rel_gap_tol=0.0, abs_gap_tol=1e-9, time_limit_s=60)
    for _ in range(10):
        m = random_mip(rng, max_binaries=6, max_continuous=4)
        a = solve(m, cfg)
        b = solve_external(m, highs_command(cfg), cfg)
        assert a.status is b.status
        if a.status is Status.OPTIMAL:
            assert b.objective == pytest.approx(a.objective, rel=1e-6, abs=1e-6)
