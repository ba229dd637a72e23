"""
pressure-lab - 表示、谱数据、长度泛函与认证单元测试
"""

import math

import numpy as np
import pytest

from app.core.errors import NotLoxodromic, PreconditionError, ProximalityFailure, SingularProduct
from app.core.models import FunctionalKind
from app.group.classes import random_word
from app.group.words import Word
from app.rep.certify import certify_anosov
from app.rep.functionals import LengthFunctional, symmetric_power, symmetric_power_rep, translation_length
from app.rep.representation import Representation, evaluate, evaluate_batch, normalize_determinant
from app.rep.spectral import dominant_eigendata, projector_decomposition, spectral_batch


def _naive(rep: Representation, word: str) -> np.ndarray:
    out = np.eye(rep.dimension)
    for letter in Word.parse(word).letters:
        g = rep.generators[abs(letter) - 1]
        out = out @ (g if letter > 0 else np.linalg.inv(g))
    return out


# ═══════════════════════════════════════════════════════════════════════════
# Representation / evaluate
# ═══════════════════════════════════════════════════════════════════════════


class TestRepresentation:
    def test_determinant_normalized(self):
        rep = Representation.from_matrices("r", [np.diag([9.0, 1.0]), np.array([[2.0, 1.0], [1.0, 1.0]])])
        for g in rep.generators:
            assert np.linalg.det(g) == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(rep.generators[0], np.diag([3.0, 1.0 / 3.0]))

    def test_negative_determinant_keeps_sign(self):
        g = normalize_determinant(np.diag([-4.0, 1.0]))
        assert np.allclose(g, np.diag([-2.0, 0.5]))

    def test_inverse_stack(self, schottky):
        stack = schottky.generator_stack
        assert np.allclose(stack[0] @ stack[1], np.eye(2))
        assert np.allclose(stack[2] @ stack[3], np.eye(2))

    def test_singular_generator(self):
        with pytest.raises(SingularProduct):
            Representation.from_matrices("bad", [np.zeros((2, 2)), np.eye(2)])

    def test_dimension_mismatch(self):
        with pytest.raises(PreconditionError):
            Representation.from_matrices("bad", [np.eye(2), np.eye(3)])

    def test_complex_flag(self):
        rep = Representation.from_matrices("c", [np.diag([3j, 1.0]), np.eye(2)])
        assert rep.is_complex
        assert abs(np.linalg.det(rep.generators[0]) - 1) < 1e-12


class TestEvaluate:
    @pytest.mark.parametrize("word", ["a", "aB", "abAB", "aabbbAb"])
    def test_matches_naive_product(self, schottky, word):
        sm = evaluate(schottky, Word.parse(word))
        assert np.allclose(sm.true_matrix(), _naive(schottky, word), rtol=1e-10)

    def test_long_word_does_not_overflow(self, schottky):
        sm = evaluate(schottky, Word.parse("ab") ** 400)
        assert np.all(np.isfinite(sm.matrix))
        assert np.max(np.abs(sm.matrix)) == pytest.approx(1.0)
        assert sm.log_scale > 100

    def test_batch_matches_single(self, schottky, classes8):
        same = [c for c in classes8 if c.length == 6]
        codes = np.stack([c.rep.codes for c in same])
        matrices, log_scales = evaluate_batch(schottky, codes)
        for i in (0, 17, len(same) - 1):
            single = evaluate(schottky, same[i].rep)
            assert np.allclose(matrices[i] * np.exp(log_scales[i]), single.true_matrix(), rtol=1e-10)

    @pytest.mark.parametrize("seed", range(12))
    def test_homomorphism_on_random_words(self, schottky, sl3_perturbed, seed):
        x = random_word(seed, 1 + seed % 30)
        y = random_word(100 + seed, 30 - seed % 30)
        for rep in (schottky, sl3_perturbed):
            sx, sy, sxy = evaluate(rep, x), evaluate(rep, y), evaluate(rep, x * y)
            # 以 exp(log_scale_x + log_scale_y) 为单位比较
            lhs = sxy.matrix * np.exp(sxy.log_scale - sx.log_scale - sy.log_scale)
            assert np.allclose(lhs, sx.matrix @ sy.matrix, rtol=0.0, atol=1e-9)

    def test_letter_outside_rank(self, schottky):
        with pytest.raises(PreconditionError):
            evaluate(schottky, Word.parse("ac"))


# ═══════════════════════════════════════════════════════════════════════════
# 谱数据
# ═══════════════════════════════════════════════════════════════════════════


class TestSpectral:
    def test_spectral_radius_of_ab(self, torus):
        sd = dominant_eigendata(evaluate(torus, Word.parse("ab")))
        assert math.exp(sd.log_radius) == pytest.approx((25 + math.sqrt(481)) / 12, rel=1e-12)
        assert sd.signed_top == 1

    def test_eigenvectors(self, schottky):
        sm = evaluate(schottky, Word.parse("aB"))
        sd = dominant_eigendata(sm)
        g = sm.true_matrix()
        lam = math.exp(sd.log_radius)
        assert np.allclose(g @ sd.attracting, lam * sd.attracting, rtol=1e-9)
        assert np.allclose(sd.repelling_covector @ g, lam * sd.repelling_covector, rtol=1e-9)

    def test_signed_top(self):
        rep = Representation.from_matrices("neg", [np.diag([-3.0, -1.0 / 3.0]), np.array([[2.0, 1.0], [1.0, 1.0]])])
        assert dominant_eigendata(evaluate(rep, Word.parse("a"))).signed_top == -1
        assert dominant_eigendata(evaluate(rep, Word.parse("aa"))).signed_top == 1

    def test_rotation_not_proximal(self):
        c, s = math.cos(0.4), math.sin(0.4)
        rep = Representation.from_matrices("rot", [np.array([[c, -s], [s, c]]), np.eye(2)])
        with pytest.raises(ProximalityFailure):
            dominant_eigendata(evaluate(rep, Word.parse("a")))

    def test_projector_decomposition(self, tau3):
        sm = evaluate(tau3, Word.parse("abAb"))
        sd = dominant_eigendata(sm)
        dec = projector_decomposition(sm, sd)
        assert np.allclose(dec.top * dec.p + dec.r, sm.matrix, atol=1e-14)
        assert np.allclose(dec.p @ dec.p, dec.p, atol=1e-10)
        assert np.allclose(dec.p @ dec.r, 0.0, atol=1e-10)
        assert dec.residual_log_radius < sd.log_radius

    def test_batch_agrees_with_single(self, schottky, classes8):
        same = [c for c in classes8 if c.length == 5][:40]
        batch = spectral_batch(*evaluate_batch(schottky, np.stack([c.rep.codes for c in same])))
        for i, c in enumerate(same):
            sd = dominant_eigendata(evaluate(schottky, c.rep))
            assert batch.log_radius[i] == pytest.approx(sd.log_radius, rel=1e-12)
            assert batch.signed_top[i] == sd.signed_top
        assert batch.proximal.all()


class TestClassFunction:
    @pytest.fixture(scope="class")
    def sample(self, classes8):
        return [c for c in classes8 if c.length <= 6][::7]

    def test_schottky_conjugates(self, schottky, sample):
        for i, c in enumerate(sample):
            base = dominant_eigendata(evaluate(schottky, c.rep)).log_radius
            for k in range(5):
                g = random_word(10 * i + k, 1 + k % 3)
                conjugate = g * c.rep * ~g
                assert dominant_eigendata(evaluate(schottky, conjugate)).log_radius == pytest.approx(base, abs=1e-10)

    def test_sl3_conjugates(self, sl3_perturbed, sample):
        for i, c in enumerate(sample[:40]):
            base = dominant_eigendata(evaluate(sl3_perturbed, c.rep)).log_radius
            for k in range(5):
                g = random_word(10 * i + k, 1 + k % 2)
                conjugate = g * c.rep * ~g
                value = dominant_eigendata(evaluate(sl3_perturbed, conjugate)).log_radius
                assert value == pytest.approx(base, abs=1e-9)

    @pytest.mark.parametrize("word", ["a", "ab", "aB", "aabAb", "abAB"])
    def test_powers(self, schottky, sl3_perturbed, word):
        w = Word.parse(word)
        for rep in (schottky, sl3_perturbed):
            base = dominant_eigendata(evaluate(rep, w)).log_radius
            for n in range(2, 11):
                assert dominant_eigendata(evaluate(rep, w**n)).log_radius == pytest.approx(n * base, rel=1e-9)


# ═══════════════════════════════════════════════════════════════════════════
# 对称幂与泛函
# ═══════════════════════════════════════════════════════════════════════════


class TestSymmetricPower:
    def test_tau2_is_identity(self):
        g = np.array([[2.0, 1.0], [3.0, 2.0]])
        assert np.allclose(symmetric_power(g, 2), g)

    def test_diagonal(self):
        assert np.allclose(symmetric_power(np.diag([3.0, 1 / 3]), 3), np.diag([9.0, 1.0, 1 / 9]))

    def test_homomorphism(self):
        g = np.array([[2.0, 1.0], [3.0, 2.0]])
        h = np.array([[1.0, 0.5], [0.0, 1.0]])
        for m in (3, 4, 5):
            assert np.allclose(symmetric_power(g @ h, m), symmetric_power(g, m) @ symmetric_power(h, m))

    def test_log_radius_scales(self, schottky, tau3, classes8):
        f1 = LengthFunctional("s", FunctionalKind.LOG_SPECTRAL_RADIUS, schottky)
        f3 = LengthFunctional("t3", FunctionalKind.LOG_SPECTRAL_RADIUS, tau3)
        sample = classes8[:300]
        assert np.allclose(f3.values(sample), 2.0 * f1.values(sample), rtol=1e-10)

    def test_needs_2x2(self, tau3):
        with pytest.raises(PreconditionError):
            symmetric_power_rep(tau3, 3)


class TestFunctionals:
    def test_translation_length(self):
        assert translation_length(np.diag([3.0, 1 / 3])) == pytest.approx(2 * math.log(3))

    def test_parabolic_not_loxodromic(self):
        with pytest.raises(NotLoxodromic):
            translation_length(np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_complex_translation_length_matches_log_radius(self, schottky, classes8):
        rep = Representation.from_matrices(
            "c", [np.diag([3.0 * (1 + 0.2j), 1.0 / (3.0 * (1 + 0.2j))]), schottky.generators[1].astype(complex)]
        )
        f = LengthFunctional("tl", FunctionalKind.TRANSLATION_LENGTH, rep)
        sample = classes8[:50]
        for c, value in zip(sample, f.values(sample)):
            assert value == pytest.approx(translation_length(evaluate(rep, c.rep).true_matrix()), rel=1e-9)

    def test_word_length(self, word_length, classes8):
        assert np.array_equal(word_length.values(classes8[:100]), [c.length for c in classes8[:100]])

    def test_scaled(self, schottky_length, classes8):
        doubled = schottky_length.scaled(2.0)
        assert np.allclose(doubled.values(classes8[:100]), 2 * schottky_length.values(classes8[:100]))

    def test_positive_scale_required(self, schottky):
        with pytest.raises(PreconditionError):
            LengthFunctional("bad", FunctionalKind.LOG_SPECTRAL_RADIUS, schottky, scale=0.0)


# ═══════════════════════════════════════════════════════════════════════════
# 认证
# ═══════════════════════════════════════════════════════════════════════════


class TestCertification:
    def test_schottky_certified(self, schottky, classes8):
        report = certify_anosov(schottky, classes8)
        assert report.certified
        assert report.failures == []
        assert report.delta < 1.0
        assert report.transversality_margin > 0
        assert report.pairs_sampled > 0

    def test_tau3_certified(self, tau3, classes8):
        report = certify_anosov(tau3, classes8)
        assert report.certified
        assert report.max_violation is not None
        assert (report.max_violation > 1e-12) == (report.holdout_violations > 0)

    def test_punctured_torus_fails(self, torus, classes8):
        report = certify_anosov(torus, classes8)
        assert not report.certified
        assert "abAB" in report.failures
        assert 0 < report.failure_fraction < 1

    def test_deterministic(self, schottky, classes8):
        assert certify_anosov(schottky, classes8, seed=3) == certify_anosov(schottky, classes8, seed=3)
