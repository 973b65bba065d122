import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jouleheat.config import ConfigError, Expression, RunConfig, parse, serialize
from jouleheat.presets import get_preset

FULL = """
[problem]
preset = "custom"
geometry = "fichera"
T = 0.05
k = 1
l = 2

[sigma]
kind = "tabulated"
u = [0.0, 1.0, 2.0]
s = [1.0, 2.0, 1.5]

[data]
g_phi = "10*(x1 + 1)"
g_u = "0"
u0 = "0.1*sin(pi*x1)"

[boundary]
temperature = [1, 7]
potential = [1, 7]

[clamp]
a = -1.0
b = 11.0
"""


def test_full_config_builds():
    cfg = parse(FULL)
    preset = cfg.build_preset()
    assert preset.geometry == "fichera" and preset.T == 0.05
    assert preset.data.partition_phi.dirichlet_tags == frozenset({1, 7})
    x = np.array([[-1.0, 0, 0], [0.0, 0, 0]])
    assert np.allclose(preset.data.g_phi(x, 0.0), [0.0, 10.0])
    assert preset.data.clamp.a == -1.0
    assert preset.data.sigma(np.array([0.5]))[0] == pytest.approx(1.5)


def test_round_trip():
    cfg = parse(FULL)
    assert parse(serialize(cfg)) == cfg
    default = RunConfig()
    assert parse(serialize(default)) == default
    assert "inf" in serialize(default)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 6), st.integers(0, 12), st.floats(0.01, 1.0), st.floats(1e-14, 1e-6),
       st.sampled_from(["example1", "example2", "example3", "example4"]))
def test_round_trip_property(k, l, theta, tol, preset):
    cfg = RunConfig()
    cfg.problem.k, cfg.problem.l, cfg.problem.preset = k, l, preset
    cfg.adapt.theta = theta
    cfg.solver.rel_tol = tol
    assert parse(serialize(cfg.validate())) == cfg


@pytest.mark.parametrize("text,where", [
    ("[problem]\nk = 'a'\n", "[problem] k"),
    ("[problem]\nk = 9\n", "[problem] k"),
    ("[problem]\npreset = 'example9'\n", "[problem] preset"),
    ("[problme]\nk = 1\n", "[problme]"),
    ("[problem]\nkk = 1\n", "[problem] kk"),
    ("[sigma]\nkind = 'cubic'\n", "[sigma] kind"),
    ("[problem]\npreset='custom'\ngeometry='fichera'\n[data]\ng_phi = 'import os'\n", "[data] g_phi"),
    ("[problem\nk = 1\n", "line 1"),
    ("[clamp]\na = 2.0\nb = 1.0\n", "[clamp] a"),
])
def test_malformed_configs(text, where):
    with pytest.raises(ConfigError) as e:
        parse(text)
    assert where in str(e.value)


def test_expression_grammar():
    x = np.array([[0.5, 2.0, -1.0]])
    assert Expression("x1 + x2 * x3 - t")(x, 1.0)[0] == pytest.approx(-2.5)
    assert Expression("pow(x2, 3) / 2")(x)[0] == pytest.approx(4.0)
    assert Expression("max(x1, x2) + min(x1, x3)")(x)[0] == pytest.approx(1.0)
    assert Expression("exp(0) + cos(0) + arctan(0) + sin(pi/2)")(x)[0] == pytest.approx(3.0)
    assert Expression("-x1**2")(x)[0] == pytest.approx(-0.25)
    assert Expression("3")(np.zeros((4, 3))).shape == (4,)
    for bad in ("__import__('os')", "x1.real", "x4", "sin(x1, x2)", "lambda: 1", "[1]", "x1 if x2 else x3",
                "True", "sqrt(x1)", "'a'"):
        with pytest.raises(ConfigError):
            Expression(bad)


def test_presets_expressible_in_grammar():
    x = np.random.default_rng(0).uniform(-1, 1, (20, 3))
    assert np.allclose(Expression("10*(x1 + 1)")(x), get_preset("example2").data.g_phi(x, 0))
    assert np.allclose(Expression("2*x2*(x2 + 1) + 5")(x), get_preset("example3").data.g_phi(x, 0))


def test_sigma_presets():
    cfg = RunConfig()
    cfg.sigma.kind = "arctan"
    s = cfg.sigma_model()
    assert s(np.array([0.0]))[0] == pytest.approx(math.pi / 2)
    cfg.sigma.kind = "constant"
    cfg.sigma.value = -1.0
    with pytest.raises(ConfigError):
        cfg.sigma_model()
    cfg.sigma.kind = "tabulated"
    cfg.sigma.u, cfg.sigma.s = [0.0, 1.0], [1.0]
    with pytest.raises(ConfigError):
        cfg.sigma_model()


def test_custom_boundary_tags_checked():
    cfg = parse(FULL)
    cfg.boundary.potential = [42]
    with pytest.raises(ConfigError):
        cfg.build_preset()
