"""
pressure-lab - 参数族与压力度量单元测试
"""

import numpy as np
import pytest
import sympy

from app.core.errors import CertificationFailure, ConfigError, OutOfDomain, PreconditionError, StepTooLarge
from app.core.models import Route
from app.experiments.config import build_family, load_config
from app.families.family import (
    ConjugationFamily,
    ExplicitFamily,
    SymmetricPowerFamily,
    evaluate_family,
    family_functional,
    parse_polynomial,
    sl_basis,
    with_conjugation,
)
from app.families.metric import (
    FamilyProbe,
    entropy_curve,
    entropy_derivative,
    first_derivative_check,
    j_profile,
    log_type_residuals,
    pressure_form,
    variance_cross_check,
)
from app.rep.functionals import symmetric_power
from config.settings import settings

from tests.dimension_oracle import limit_set_dimension

SCHOTTKY_B = [["5/3", "4/3"], ["4/3", "5/3"]]


def _multiplier_family(**kwargs) -> ExplicitFamily:
    return ExplicitFamily(
        label="multiplier",
        parameters=["t"],
        base_point=np.zeros(1),
        box=[(-0.5, 0.5)],
        generators=[[["(3+t)^2", "0"], ["0", "1"]], SCHOTTKY_B],
        **kwargs,
    )


@pytest.fixture(scope="module")
def multiplier():
    return _multiplier_family()


@pytest.fixture(scope="module")
def multiplier_probe(multiplier):
    return FamilyProbe(multiplier)


@pytest.fixture(scope="module")
def scaled():
    return ExplicitFamily(
        label="scaled",
        parameters=["s"],
        base_point=np.zeros(1),
        box=[(-0.5, 0.5)],
        scale_expr="1 + s",
        generators=[[["3", "0"], ["0", "1/3"]], SCHOTTKY_B],
    )


@pytest.fixture(scope="module")
def conj(schottky):
    return ConjugationFamily(
        label="conj",
        parameters=["u", "v", "w"],
        base_point=np.zeros(3),
        box=[(-0.25, 0.25)] * 3,
        representation=schottky,
    )


# ═══════════════════════════════════════════════════════════════════════════
# 族的构造与求值
# ═══════════════════════════════════════════════════════════════════════════


class TestParsePolynomial:
    def test_rational_and_power(self):
        t = sympy.Symbol("t")
        assert parse_polynomial("(3+t)^2 - 1/3", [t]) == (3 + t) ** 2 - sympy.Rational(1, 3)

    def test_decimal_is_exact(self):
        t = sympy.Symbol("t")
        assert parse_polynomial("0.1*t", [t]) == sympy.Rational(1, 10) * t

    @pytest.mark.parametrize("text", ["sin(t)", "1/t", "t + x", "((t"])
    def test_rejected(self, text):
        with pytest.raises(ConfigError):
            parse_polynomial(text, [sympy.Symbol("t")])


class TestFamilies:
    def test_sl_basis(self):
        basis = sl_basis(3)
        assert len(basis) == 8
        assert all(abs(np.trace(e)) == 0 for e in basis)

    def test_base_point_matches_schottky(self, multiplier, schottky):
        rep = evaluate_family(multiplier, [0.0])
        for g, h in zip(rep.generators, schottky.generators):
            assert np.allclose(g, h)

    def test_multiplier_normalized(self, multiplier):
        rep = evaluate_family(multiplier, [0.25])
        assert np.allclose(rep.generators[0], np.diag([3.25, 1 / 3.25]))

    def test_out_of_box(self, multiplier):
        with pytest.raises(OutOfDomain):
            evaluate_family(multiplier, [0.7])

    def test_wrong_dimension(self, multiplier):
        with pytest.raises(PreconditionError):
            evaluate_family(multiplier, [0.1, 0.2])

    def test_box_mismatch(self):
        with pytest.raises(ConfigError):
            ExplicitFamily(label="bad", parameters=["t"], base_point=np.zeros(2), box=[(-1, 1)], generators=[])

    def test_functional_scale(self, scaled):
        assert family_functional(scaled, [0.2]).scale == pytest.approx(1.2)
        with pytest.raises(OutOfDomain):
            scaled.functional_scale([-1.5])

    def test_symmetric_power_commutes(self, multiplier):
        fam = SymmetricPowerFamily(
            label="tau3",
            parameters=["t"],
            base_point=np.zeros(1),
            box=[(-0.5, 0.5)],
            base=multiplier,
            power=3,
        )
        t = [0.15]
        direct = evaluate_family(fam, t)
        base = evaluate_family(multiplier, t)
        for g, h in zip(direct.generators, base.generators):
            assert np.allclose(g, symmetric_power(h, 3))

    def test_conjugation_preserves_spectrum(self, conj, schottky):
        rep = evaluate_family(conj, [0.1, -0.2, 0.05])
        for g, h in zip(rep.generators, schottky.generators):
            assert np.allclose(np.sort(np.linalg.eigvals(g)), np.sort(np.linalg.eigvals(h)))

    def test_with_conjugation(self, multiplier):
        fam = with_conjugation(multiplier, radius=0.25)
        assert fam.parameters == ["t", "g0", "g1", "g2"]
        assert fam.box[1:] == [(-0.25, 0.25)] * 3
        assert np.array_equal(fam.base_point, np.zeros(4))

    def test_with_conjugation_clash(self):
        fam = ExplicitFamily(
            label="clash",
            parameters=["g0"],
            base_point=np.zeros(1),
            box=[(-0.5, 0.5)],
            generators=[[["(3+g0)^2", "0"], ["0", "1"]], SCHOTTKY_B],
        )
        with pytest.raises(ConfigError):
            with_conjugation(fam)

    def test_complex_family_uses_translation_length(self, config_dir):
        fam = build_family(load_config(config_dir / "complex_multiplier.yaml"), "complex_multiplier")
        f = family_functional(fam, [0.1])
        assert f.representation.is_complex
        assert f.period_factor == 2.0


# ═══════════════════════════════════════════════════════════════════════════
# 模板点与 J
# ═══════════════════════════════════════════════════════════════════════════


class TestFamilyProbe:
    def test_uncertified_point(self):
        fam = ExplicitFamily(
            label="torus",
            parameters=["t"],
            base_point=np.zeros(1),
            box=[(-0.5, 0.5)],
            generators=[[["9", "0"], ["0", "1"]], [["5/4", "3/4"], ["3/4", "5/4"]]],
        )
        with pytest.raises(CertificationFailure):
            FamilyProbe(fam).check([0.0])

    def test_j_at_base_point(self, multiplier_probe):
        assert multiplier_probe.j_value([0.0], [0.0]) == 1.0

    def test_profile_is_u_shaped(self, multiplier, multiplier_probe):
        rows = j_profile(multiplier, [0.0], [1.0], [-0.2, -0.1, 0.1, 0.2], probe=multiplier_probe)
        J = {row.eps: row.J for row in rows}
        assert all(value >= 1 - 1e-9 for value in J.values())
        assert J[0.2] > J[0.1] > 1.0
        assert J[-0.2] > J[-0.1] > 1.0

    def test_first_derivative_vanishes(self, multiplier, multiplier_probe):
        assert abs(first_derivative_check(multiplier, [0.0], [1.0], probe=multiplier_probe)) < 1e-4

    def test_entropy_curve_halving(self, multiplier, multiplier_probe):
        curve = entropy_curve(multiplier, [0.0], [1.0], spacing=0.1, probe=multiplier_probe)
        assert len(curve.points) == 5
        assert len(curve.halved_second_differences) == 7
        assert 0.5 <= curve.halving_ratio <= 2.0

    def test_variance_matches_hessian(self, multiplier, multiplier_probe):
        check = variance_cross_check(multiplier, [0.0], [1.0], probe=multiplier_probe)
        assert check.hessian > 0
        assert check.transfer_variance_norm > 0
        assert check.relative_gap < 0.05

    def test_orbit_variance_reported(self, multiplier, multiplier_probe):
        check = variance_cross_check(multiplier, [0.0], [1.0], step=0.05, probe=multiplier_probe, with_orbits=True)
        assert check.orbit_variance_norm is not None
        assert check.orbit_variance_norm > 0


class TestConjugationFamily:
    @pytest.fixture(scope="class")
    def probe(self, conj):
        return FamilyProbe(conj, route=Route.ORBIT, certify=False)

    def test_j_identically_one(self, conj, probe):
        rows = j_profile(conj, conj.base_point, [1.0, -0.5, 0.5], [0.05, 0.1], probe=probe)
        assert all(row.J == pytest.approx(1.0, abs=1e-9) for row in rows)

    def test_first_derivative_zero(self, conj, probe):
        assert abs(first_derivative_check(conj, conj.base_point, [0.0, 1.0, 0.0], probe=probe)) < 1e-7

    def test_entropy_constant(self, conj, probe):
        result = entropy_derivative(conj, conj.base_point, [1.0, 1.0, 1.0], probe=probe)
        assert abs(result.dh_dt) < 1e-7
        assert abs(result.K) < 1e-7


class TestScaledFamily:
    def test_K_is_one(self, scaled):
        result = entropy_derivative(scaled, [0.0], [1.0])
        assert result.K == pytest.approx(1.0, abs=1e-6)
        assert result.h > 0

    def test_log_type(self, scaled, classes8):
        residuals = log_type_residuals(scaled, [0.0], [1.0], classes8[:200])
        assert residuals.K == pytest.approx(1.0, abs=1e-6)
        assert residuals.max_residual < 1e-5
        assert len(residuals.residuals) == 200


class TestConjugationDirections:
    """追加共轭参数后，沿共轭方向 J 与压力形式都不变"""

    @pytest.fixture(scope="class")
    def gauged(self, multiplier):
        return with_conjugation(multiplier, radius=0.25)

    @pytest.fixture(scope="class")
    def context(self, gauged):
        return FamilyProbe(gauged, route=Route.ORBIT, certify=False)

    def test_profile_flat_along_conjugation(self, gauged, context):
        rows = j_profile(gauged, gauged.base_point, [0.0, 1.0, -0.5, 0.5], [-0.2, 0.1, 0.2], probe=context)
        assert all(row.J == pytest.approx(1.0, abs=1e-9) for row in rows)

    def test_conjugating_endpoint_keeps_j(self, gauged, context):
        plain = context.j_value(gauged.base_point, [0.1, 0.0, 0.0, 0.0])
        for g in ([0.2, 0.0, 0.0], [0.0, -0.15, 0.1], [0.05, 0.05, -0.2]):
            assert context.j_value(gauged.base_point, [0.1, *g]) == pytest.approx(plain, abs=1e-9)

    def test_profile_ignores_gauge_component(self, gauged, context):
        steps = [-0.1, -0.05, 0.05, 0.1]
        along = j_profile(gauged, gauged.base_point, [1.0, 0.0, 0.0, 0.0], steps, probe=context)
        mixed = j_profile(gauged, gauged.base_point, [1.0, 0.3, -0.2, 0.1], steps, probe=context)
        # p(v, v) 只由这些 J 值决定
        for a, b in zip(along, mixed):
            assert b.J == pytest.approx(a.J, abs=1e-9)


class TestStepHalving:
    """中心差分误差 O(ε²)，Richardson 外推后 O(ε⁴)"""

    @pytest.fixture(scope="class")
    def scaled_context(self, scaled):
        return FamilyProbe(scaled)

    def test_entropy_derivative_orders(self, scaled, scaled_context, monkeypatch):
        # h(s) = h₀ / (1 + s)，dh/ds(0) = −h₀
        h0 = scaled_context.entropy([0.0])
        monkeypatch.setattr(settings, "richardson", False)
        plain = [abs(entropy_derivative(scaled, [0.0], [1.0], eps, scaled_context).dh_dt + h0) for eps in (0.2, 0.1)]
        monkeypatch.setattr(settings, "richardson", True)
        extrapolated = [
            abs(entropy_derivative(scaled, [0.0], [1.0], eps, scaled_context).dh_dt + h0) for eps in (0.2, 0.1)
        ]
        assert 3.5 < plain[0] / plain[1] < 4.5
        assert extrapolated[0] / extrapolated[1] > 12
        assert extrapolated[1] < 1e-2 * plain[1]

    def test_first_derivative_orders(self, multiplier, multiplier_probe, monkeypatch):
        monkeypatch.setattr(settings, "richardson", False)
        plain = [abs(first_derivative_check(multiplier, [0.0], [1.0], eps, multiplier_probe)) for eps in (0.04, 0.02)]
        monkeypatch.setattr(settings, "richardson", True)
        extrapolated = abs(first_derivative_check(multiplier, [0.0], [1.0], 0.04, multiplier_probe))
        assert 2.5 < plain[0] / plain[1] < 6.0
        assert extrapolated < plain[0]

    def test_quadratic_residual_shrinks(self, multiplier, multiplier_probe):
        coarse = pressure_form(multiplier, step=0.08, probe=multiplier_probe).quadratic_residuals[0]
        fine = pressure_form(multiplier, step=0.04, probe=multiplier_probe).quadratic_residuals[0]
        assert 2.5 < coarse / fine < 6.0

    def test_non_quadratic_step_rejected(self, multiplier, multiplier_probe, monkeypatch):
        monkeypatch.setattr(settings, "quadratic_residual_ratio", 0.0)
        monkeypatch.setattr(settings, "quadratic_residual_floor", 0.0)
        with pytest.raises(StepTooLarge):
            pressure_form(multiplier, step=0.05, probe=multiplier_probe)


# ═══════════════════════════════════════════════════════════════════════════
# 压力形式
# ═══════════════════════════════════════════════════════════════════════════


class TestPressureForm:
    @pytest.fixture(scope="class")
    def config(self, config_dir):
        return load_config(config_dir / "schottky3.yaml")

    def test_positive_definite(self, config):
        form = pressure_form(build_family(config, "schottky3"))
        eigenvalues = np.array(form.eigenvalues)
        assert form.psd
        assert eigenvalues.min() > 0
        assert form.symmetry_defect == 0.0
        assert form.gauge_null_count == 0
        assert form.expected_gauge_dimension is None
        assert all(abs(d) < 1e-4 for d in form.first_derivatives)

    def test_one_dimensional_basis(self, multiplier, multiplier_probe):
        form = pressure_form(multiplier, probe=multiplier_probe)
        assert np.array(form.matrix).shape == (1, 1)
        assert form.matrix[0][0] > 0

    @pytest.mark.slow
    def test_gauge_directions_small(self, config):
        fam = build_family(config, "schottky3_gauged")
        form = pressure_form(fam)
        matrix = np.array(form.matrix)
        top = max(abs(x) for x in form.eigenvalues)
        assert form.expected_gauge_dimension == 3
        assert np.abs(matrix[3:, 3:]).max() <= 0.05 * top
        assert form.psd


# ═══════════════════════════════════════════════════════════════════════════
# Fuchsian 点：熵根 = 极限集维数
# ═══════════════════════════════════════════════════════════════════════════


@pytest.mark.slow
def test_fuchsian_entropy_is_dimension(config_dir, schottky):
    fam = build_family(load_config(config_dir / "complex_multiplier.yaml"), "complex_multiplier")
    probe = FamilyProbe(fam, depth=5, certify=False)
    assert probe.entropy([0.0]) == pytest.approx(limit_set_dimension(list(schottky.generators)), abs=5e-3)


def test_complex_family_even(config_dir):
    fam = build_family(load_config(config_dir / "complex_multiplier.yaml"), "complex_multiplier")
    probe = FamilyProbe(fam, route=Route.ORBIT, certify=False)
    assert probe.entropy([0.2]) == pytest.approx(probe.entropy([-0.2]), rel=1e-9)
