import math

import pytest

from vortexflow.config import SCHEMA, ConfigError, load, packaged_configs, parse_text, resolve


def test_defaults_fill_missing_keys():
    cfg = parse_text("problem = det2d\n")
    assert set(cfg) == set(SCHEMA)
    assert cfg["grid.L"] == pytest.approx(2 * math.pi)
    assert cfg.problem == "det2d"


def test_typed_values():
    cfg = parse_text(
        "grid.L = 2pi\nsolver.dealias = no\nnoise.modes = 1,0; 1,2\nnoise.amplitudes = 0.5\n"
        "study.step_counts = 8, 16,32\n# comment\n; other comment\n"
    )
    assert cfg["grid.L"] == pytest.approx(2 * math.pi)
    assert cfg["solver.dealias"] is False
    assert cfg["noise.modes"] == ((1, 0), (1, 2))
    assert cfg["study.step_counts"] == (8, 16, 32)


@pytest.mark.parametrize(
    "text",
    [
        "solver.viscosity = 1\n",
        "solver.sigma = -1\n",
        "grid.K = 7\n",
        "problem = det3d\n",
        "problem = snse\ngrid.dim = 3\n",
        "noise.modes = 1,0; 0,1\nnoise.amplitudes = 1,2,3\n",
        "noise.modes = 0,0\n",
        "noise.modes = 1,0\nnoise.q = 2\n",
        "study.window = 1\n",
        "solver.dealias = maybe\n",
        "this is not a key value line\n",
    ],
)
def test_invalid_documents_rejected(text):
    with pytest.raises(ConfigError):
        parse_text(text)


def test_packaged_configs_all_load():
    names = packaged_configs()
    assert "taylor_green.cfg" in names and "snse_order.cfg" in names
    for name in names:
        load(name)


def test_resolve_prefers_real_files(tmp_path):
    p = tmp_path / "mine.cfg"
    p.write_text("seed = 3\n")
    assert resolve(str(p)) == p
    assert load(str(p))["seed"] == 3
    with pytest.raises(ConfigError):
        resolve(str(tmp_path / "absent.cfg"))
