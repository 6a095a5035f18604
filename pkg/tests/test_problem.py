import numpy as np
import pytest

from oswr.problem import (
    ConfigError,
    EvalError,
    parse_config,
    parse_expression,
    serialize_config,
    validate_problem,
)

EXP1 = """
# two-subdomain heterogeneous advection-diffusion test
[domain]
box = 0 1 0 2
T = 1.0
windows = 1
tolerance = 1e-8
max_iterations = 100
initial_guess = from_u0
u0 = "0.25*exp(-100*((x-0.55)^2+(y-1.7)^2))"
f = "0"

[subdomain]
id = 1
box = 0 0.5 0 2
nu = "0.001*sqrt(y)"
bx = "0"
by = "-1"
c = "0"
nx = 16
ny = 64
nt = 128
degree = 1

[subdomain]
id = 2
box = 0.5 1 0 2
nu = "0.1*sin(x*y)"
bx = "-0.1"
by = "0"
c = "0"
nx = 12
ny = 48
nt = 94
degree = 1

[transmission]
from = 1
to = 2
p = 0.5
q = 0.1
r = "-1"
s = 0.046

[transmission]
from = 2
to = 1
p = 0.5
q = 0.1
r = "0"
s = 0.001
"""

POROSITY = """
[domain]
box = 0 1 0 2
T = 1.5
u0 = "0.25*exp(-100*((x-0.55)^2+(y-1.7)^2))"

[subdomain]
id = 1
box = 0 0.5 0 2
nu = "0.003"
bx = "-sin(1.5707963267948966*(y-1))*cos(3.141592653589793*(x-0.5))"
by = "3*cos(1.5707963267948966*(y-1))*sin(3.141592653589793*(x-0.5))"
omega = "0.1"
nx = 16
ny = 64
nt = 180
degree = 1

[subdomain]
id = 2
box = 0.5 1 0 2
nu = "0.01"
bx = "-sin(1.5707963267948966*(y-1))*cos(3.141592653589793*(x-0.5))"
by = "3*cos(1.5707963267948966*(y-1))*sin(3.141592653589793*(x-0.5))"
omega = "1"
nx = 16
ny = 64
nt = 100
degree = 1

[transmission]
from = 1
to = 2
p = 0.5
q = 0.1
r = "0"
s = 0.01

[transmission]
from = 2
to = 1
p = 0.5
q = 0.1
r = "0"
s = 0.003
"""


class TestExpressions:
    def test_eval_sin_product(self):
        e = parse_expression("0.1*sin(x*y)")
        assert e(0.5, 2.0, 0.0) == pytest.approx(0.1 * np.sin(1.0), abs=1e-12)
        assert e(0.5, 2.0, 0.0) == pytest.approx(0.0841470985, abs=1e-9)

    def test_eval_constant(self):
        assert parse_expression("1")(0.3, -2.0, 5.0) == 1.0

    def test_gaussian_peak(self):
        e = parse_expression("0.25*exp(-100*((x-0.55)^2+(y-1.7)^2))")
        assert e(0.55, 1.7, 0.0) == pytest.approx(0.25, abs=1e-15)

    def test_eval_is_pure(self):
        e = parse_expression("sqrt(y)*sin(x*t)+x/(1+y)")
        a = e(0.3, 0.7, 1.1)
        b = e(0.3, 0.7, 1.1)
        assert a == b  # bit identical

    def test_vectorized_broadcast(self):
        e = parse_expression("x+2*y")
        x = np.array([0.0, 1.0, 2.0])
        out = e(x, 1.0, 0.0)
        assert np.array_equal(out, x + 2.0)

    def test_sqrt_domain_error_reports_point(self):
        e = parse_expression("sqrt(y)")
        with pytest.raises(EvalError, match="sqrt of negative"):
            e(0.0, -1.0, 0.0)

    def test_division_by_zero_reports_point(self):
        e = parse_expression("1/x")
        with pytest.raises(EvalError, match="division by zero"):
            e(np.array([1.0, 0.0]), 0.0, 0.0)

    def test_syntax_error_dangling_operator(self):
        with pytest.raises(ConfigError):
            parse_expression("x +")

    def test_unknown_name(self):
        with pytest.raises(ConfigError):
            parse_expression("foo(x)")

    def test_power_precedence(self):
        e = parse_expression("-x^2")
        assert e(3.0) == -9.0

    def test_diff_divergence(self):
        e = parse_expression("x^2*y")
        assert e.diff("x")(2.0, 3.0, 0.0) == pytest.approx(12.0)
        assert e.diff("y")(2.0, 3.0, 0.0) == pytest.approx(4.0)

    def test_roundtrip_through_str(self):
        e = parse_expression("0.5*(x - y)^2/(1 + t) - sin(x)")
        e2 = parse_expression(str(e))
        pts = (0.3, 1.2, 0.8)
        assert e(*pts) == pytest.approx(e2(*pts), rel=1e-15)


class TestParseConfig:
    def test_experiment_one_parses(self):
        cfg = parse_config(EXP1)
        s1 = cfg.subdomain(1)
        assert s1.nu(0.2, 1.0, 0.0) == pytest.approx(0.001)
        assert cfg.T == 1.0
        assert cfg.transmission[(1, 2)].q == 0.1

    def test_omega_defaults_to_one(self):
        cfg = parse_config(EXP1)
        assert cfg.subdomain(1).omega(0.1, 0.1, 0.0) == 1.0

    def test_missing_domain_section(self):
        with pytest.raises(ConfigError, match="domain"):
            parse_config("[subdomain]\nid = 1\nbox = 0 1\n")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("[domain]\nbox = 0 1\nT = 1\nfoo = 2\n")

    def test_missing_T(self):
        with pytest.raises(ConfigError, match="'T'"):
            parse_config("[domain]\nbox = 0 1\n[subdomain]\nid = 1\nbox = 0 1\nnx = 2\nnt = 2\n")

    def test_bad_expression_has_location(self):
        bad = EXP1.replace('"0.001*sqrt(y)"', '"0.001*sqrt(y"')
        with pytest.raises(ConfigError):
            parse_config(bad)

    def test_dimension_mismatch_in_b(self):
        text = """
[domain]
box = 0 1
T = 1
[subdomain]
id = 1
box = 0 1
bx = "1"
by = "1"
nx = 2
nt = 2
"""
        with pytest.raises(ConfigError, match="dimension mismatch"):
            parse_config(text)

    def test_serialize_parse_idempotent(self):
        for text in (EXP1, POROSITY):
            s1 = serialize_config(parse_config(text))
            s2 = serialize_config(parse_config(s1))
            assert s1 == s2

    def test_transmission_mirrored_when_one_direction_given(self):
        text = EXP1.split("[transmission]")[0] + "[transmission]\nfrom = 1\nto = 2\np = 0.7\n"
        cfg = parse_config(text)
        assert cfg.transmission[(2, 1)].p == 0.7


class TestValidation:
    def test_both_experiment_configs_accepted(self):
        for text in (EXP1, POROSITY):
            diags = validate_problem(parse_config(text))
            assert not [d for d in diags if d.severity == "error"]

    def test_reaction_shift_warning_only(self):
        diags = validate_problem(parse_config(EXP1))
        warns = [d for d in diags if d.severity == "warning"]
        assert any("c + div(b)/2" in d.message for d in warns)

    def test_zero_p_sum_is_hard_error(self):
        text = EXP1.replace("p = 0.5", "p = 0.0")
        diags = validate_problem(parse_config(text))
        assert any("p_ij + p_ji" in d.message for d in diags if d.severity == "error")

    def test_overlapping_boxes_rejected(self):
        text = EXP1.replace("box = 0.5 1 0 2", "box = 0.4 1 0 2")
        diags = validate_problem(parse_config(text))
        assert any("overlap" in d.message or "tile" in d.message
                   for d in diags if d.severity == "error")

    def test_gap_rejected(self):
        text = EXP1.replace("box = 0.5 1 0 2", "box = 0.6 1 0 2")
        diags = validate_problem(parse_config(text))
        assert any(d.severity == "error" for d in diags)

    def test_negative_s_with_q_rejected(self):
        text = EXP1.replace("s = 0.046", "s = -1.0")
        diags = validate_problem(parse_config(text))
        assert any("s must be positive" in d.message for d in diags if d.severity == "error")

    def test_mixed_degrees_rejected(self):
        text = EXP1.replace("degree = 1\n\n[transmission]", "degree = 0\n\n[transmission]", 1)
        # only the second subdomain flips; first stays degree 1
        cfg = parse_config(text)
        degs = {s.degree for s in cfg.subdomains}
        if len(degs) > 1:
            diags = validate_problem(cfg)
            assert any("mixed" in d.message.lower() for d in diags if d.severity == "error")
