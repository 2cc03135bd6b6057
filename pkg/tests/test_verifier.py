"""
Unit tests for the randomized structural checks.
"""

import unittest

import numpy as np

from jetlab.cones import MonotonicityCone
from jetlab.config import AppConfig
from jetlab.errors import InvalidInput, Unsupported
from jetlab.jets import Jet, lambda_min
from jetlab.models import CheckStatus, Domain, EquationBoundary
from jetlab.subequations import Subequation, builtin, induce, oracle_subequation
from jetlab.verifier import (
    check_biduality, check_compatibility, check_directionality, check_monotonicity, check_N, check_P,
    ModulusTable, check_proper_ellipticity, check_T, fiber_modulus, run_battery,
)

SAMPLES = 600


def _trace(J):
    return np.trace(J.A, axis1=-2, axis2=-1)


class TestPositivityAndNegativity(unittest.TestCase):
    """Test the P and N checks."""

    def setUp(self):
        self.config = AppConfig(samples=SAMPLES, stream_size=256)
        self.H = induce(builtin("laplace"))

    def test_laplace_passes(self):
        """Test H is P- and N-monotone."""
        self.assertIs(check_P(self.H, SAMPLES, 1, self.config).verdict, CheckStatus.PASS)
        self.assertIs(check_N(self.H, SAMPLES, 1, self.config).verdict, CheckStatus.PASS)

    def test_reversed_trace_fails_positivity(self):
        """Test {tr A <= 0} fails with a witness moved by P = I."""
        broken = Subequation("tr<=0", 2, margin_fn=lambda x, J: -_trace(J),
                             probe=Jet(0.0, [0.0, 0.0], -np.eye(2)))
        report = check_P(broken, SAMPLES, 3, self.config)
        self.assertIs(report.verdict, CheckStatus.FAIL)
        self.assertGreater(report.details["violations"], 0)
        self.assertTrue(report.counterexamples)
        self.assertLessEqual(len(report.counterexamples), 10)
        self.assertIn("moved_jet", report.counterexamples[0])

    def test_nonnegative_r_fails_negativity(self):
        """Test {r >= 0} fails check_N."""
        broken = Subequation("r>=0", 2, margin_fn=lambda x, J: J.r, probe=Jet(1.0, [0.0, 0.0], np.zeros((2, 2))))
        report = check_N(broken, SAMPLES, 3, self.config)
        self.assertIs(report.verdict, CheckStatus.FAIL)
        self.assertLess(report.counterexamples[0]["margins"]["moved"], 0.0)

    def test_det_minus_r_negativity(self):
        """Test the det - r set with G2 passes check_N."""
        F = induce(builtin("det_minus_r", {"G": "G2"}))
        self.assertIs(check_N(F, SAMPLES, 2, self.config).verdict, CheckStatus.PASS)

    def test_reports_are_reproducible(self):
        """Test the same seed yields the same report and a new seed changes it."""
        broken = Subequation("tr<=0", 2, margin_fn=lambda x, J: -_trace(J),
                             probe=Jet(0.0, [0.0, 0.0], -np.eye(2)))
        first = check_P(broken, SAMPLES, 9, self.config).to_dict()
        second = check_P(broken, SAMPLES, 9, self.config).to_dict()
        other = check_P(broken, SAMPLES, 10, self.config).to_dict()
        self.assertEqual(first, second)
        self.assertNotEqual(first["counterexamples"], other["counterexamples"])

    def test_thread_count_does_not_change_results(self):
        """Test a thread pool merges streams in order."""
        serial = check_P(self.H, 1000, 4, AppConfig(threads=1, stream_size=128)).to_dict()
        pooled = check_P(self.H, 1000, 4, AppConfig(threads=4, stream_size=128)).to_dict()
        self.assertEqual(serial, pooled)


class TestTopologicalStability(unittest.TestCase):
    """Test the T surrogates."""

    def setUp(self):
        self.config = AppConfig(samples=SAMPLES, stream_size=256)

    def test_laplace(self):
        """Test H passes all three surrogates."""
        report = check_T(induce(builtin("laplace")), SAMPLES, 1, self.config)
        self.assertIs(report.verdict, CheckStatus.PASS)
        self.assertEqual(report.details["approach"], 0)

    def test_perturbed_monge_ampere(self):
        """Test the perturbed Monge-Ampere set passes on the unit box."""
        pair = builtin("perturbed_monge_ampere", {"f": 1.0, "M": [["x1", 0], [0, "x2"]]}, X=Domain.unit(2))
        self.assertIs(check_T(induce(pair), SAMPLES, 1, self.config).verdict, CheckStatus.PASS)

    def test_slab_fails(self):
        """Test {tr A >= 0} with the isolated slab {tr A = -1} fails."""
        slab = Subequation("slab", 2, margin_fn=lambda x, J: np.maximum(_trace(J), -np.abs(_trace(J) + 1.0)),
                           cone=MonotonicityCone.positive(2))
        report = check_T(slab, 2000, 5, self.config)
        self.assertIs(report.verdict, CheckStatus.FAIL)
        self.assertGreater(report.details["approach"], 0)

    def test_minimal_cone_unsupported(self):
        """Test a set monotone only for M0 cannot be checked."""
        F = Subequation("minimal", 2, margin_fn=lambda x, J: _trace(J), cone=MonotonicityCone.minimal(2))
        with self.assertRaises(Unsupported):
            check_T(F, SAMPLES, 1, self.config)


class TestMonotonicity(unittest.TestCase):
    """Test cone monotonicity and duality checks."""

    def setUp(self):
        self.config = AppConfig(samples=SAMPLES, stream_size=256)

    def test_laplace_and_convexity(self):
        """Test (H, M(P)) and (P, M(P))."""
        MP = MonotonicityCone.positive(2)
        for name in ("laplace", "min_eigenvalue"):
            report = check_monotonicity(induce(builtin(name)), MP, SAMPLES, 1, self.config)
            self.assertIs(report.verdict, CheckStatus.PASS, name)

    def test_transport_against_wrong_cone(self):
        """Test the transport set is not M(N,P)-monotone."""
        F = induce(builtin("transport"))
        report = check_monotonicity(F, MonotonicityCone.negative_positive(2), SAMPLES, 1, self.config)
        self.assertIs(report.verdict, CheckStatus.FAIL)
        self.assertGreater(report.details["direct_violations"], 0)

    def test_cone_dimension_mismatch(self):
        """Test cones of the wrong dimension are refused."""
        with self.assertRaises(InvalidInput):
            check_monotonicity(induce(builtin("laplace")), MonotonicityCone.positive(3), 10, 1, self.config)

    def test_biduality(self):
        """Test the query-built double dual reproduces H, P, Monge-Ampere and a convexity oracle."""
        convexity = oracle_subequation("convexity", 2, lambda x, J: lambda_min(J.A) >= 0.0,
                                       cone=MonotonicityCone.positive(2))
        subjects = [induce(builtin(name)) for name in ("laplace", "min_eigenvalue", "monge_ampere")]
        for F in subjects + [convexity]:
            report = check_biduality(F, SAMPLES, 1, self.config)
            self.assertIs(report.verdict, CheckStatus.PASS, F.name)
            self.assertEqual(report.details["violations"], 0)
            self.assertGreater(report.details["checked"], SAMPLES // 2)
            self.assertEqual(report.details["double_dual"], f"dual(dual({F.name}))")


class TestCompatibility(unittest.TestCase):
    """Test compatibility of proper elliptic pairs."""

    def setUp(self):
        self.config = AppConfig(samples=SAMPLES, stream_size=256)

    def test_compatible_pairs(self):
        """Test laplace and perturbed Monge-Ampere are compatible."""
        laplace = check_compatibility(builtin("laplace"), SAMPLES, 1, self.config)
        self.assertIs(laplace.verdict, CheckStatus.PASS)
        pair = builtin("perturbed_monge_ampere", {"f": 1.0, "M": [["x1", 0], [0, "x2"]]}, X=Domain.unit(2))
        self.assertIs(check_compatibility(pair, SAMPLES, 1, self.config).verdict, CheckStatus.PASS)

    def test_det_minus_r_incompatible(self):
        """Test det A - r fails at vertex jets A = 0, r < 0 for both constraint choices."""
        for G in ("G1", "G2"):
            report = check_compatibility(builtin("det_minus_r", {"G": G}), SAMPLES, 1, self.config)
            self.assertIs(report.verdict, CheckStatus.FAIL, G)
            vertex = [c["jet"] for c in report.counterexamples
                      if not np.any(c["jet"]["A"]) and c["jet"]["r"] < 0.0]
            self.assertTrue(vertex, report.counterexamples)
            self.assertGreater(report.details["interior_violations"], 0)

    def test_equation_boundary_collected(self):
        """Test zero-level jets are gathered into the equation boundary."""
        gamma = EquationBoundary()
        report = check_compatibility(builtin("laplace"), SAMPLES, 1, self.config, boundary=gamma)
        self.assertTrue(gamma.nonempty)
        self.assertTrue(report.details["equation_boundary_nonempty"])

    def test_proper_ellipticity(self):
        """Test F grows along N and P on G-jets."""
        report = check_proper_ellipticity(builtin("monge_ampere"), SAMPLES, 1, self.config)
        self.assertIs(report.verdict, CheckStatus.PASS)

    def test_directionality(self):
        """Test the transport gradient factor is D-monotone."""
        report = check_directionality(builtin("transport"), SAMPLES, 1, self.config)
        self.assertIs(report.verdict, CheckStatus.PASS)
        with self.assertRaises(Unsupported):
            check_directionality(builtin("laplace"), SAMPLES, 1, self.config)


class TestFiberModulus(unittest.TestCase):
    """Test the empirical fiberegularity modulus."""

    def test_constant_coefficients(self):
        """Test laplace has delta = inf at every eta."""
        table = fiber_modulus(builtin("laplace"), Domain.unit(2), (0.05, 0.1), samples=100)
        self.assertTrue(table.constant)
        self.assertTrue(all(np.isinf(d) for d in table.deltas))
        report = table.to_report(100, 1, builtin("laplace").tolerances)
        self.assertEqual(report.details["table"][0]["delta"], "inf")

    def test_perturbed_monge_ampere(self):
        """Test M = diag(x1, 0), f = 0 gives delta >= eta, nondecreasing in eta."""
        pair = builtin("perturbed_monge_ampere", {"f": 0.0, "M": [["x1", 0], [0, 0]]}, X=Domain.unit(2))
        table = fiber_modulus(pair, Domain.unit(2), (0.05, 0.1, 0.2), seed=1, samples=300)
        self.assertEqual(table.form, "operator")
        self.assertTrue(table.positive)
        self.assertEqual(table.deltas, sorted(table.deltas))
        for eta, delta in zip(table.etas, table.deltas):
            self.assertGreaterEqual(delta, eta - 1e-6)
        self.assertEqual(table.deltas, list(np.maximum.accumulate(table.raw_deltas)))
        self.assertTrue(table.nondecreasing)
        report = table.to_report(300, 1, pair.tolerances)
        self.assertIs(report.verdict, CheckStatus.PASS)
        self.assertEqual([row["raw_delta"] for row in report.details["table"]], table.raw_deltas)

    def test_dropping_raw_deltas_fail(self):
        """Test a raw delta that drops as eta grows is reported and fails the check."""
        table = ModulusTable("synthetic", "set", [0.1, 0.2], [0.3, 0.3], [[], []], raw_deltas=[0.3, 0.1])
        self.assertTrue(table.positive)
        self.assertFalse(table.nondecreasing)
        report = table.to_report(10, 1, builtin("laplace").tolerances)
        self.assertIs(report.verdict, CheckStatus.FAIL)
        self.assertFalse(report.details["nondecreasing"])
        self.assertEqual(report.details["table"][1], {"eta": 0.2, "delta": 0.3, "raw_delta": 0.1})

    def test_invalid_eta(self):
        """Test non-positive eta values are refused."""
        with self.assertRaises(InvalidInput):
            fiber_modulus(builtin("laplace"), Domain.unit(2), (0.0,))


class TestBattery(unittest.TestCase):
    """Test the full battery."""

    def setUp(self):
        self.config = AppConfig(samples=400, stream_size=256)

    def test_laplace(self):
        """Test laplace passes every check in the battery."""
        reports = run_battery(builtin("laplace"), 400, 1, self.config)
        names = [r.name for r in reports]
        self.assertEqual(names[:5], ["check_P", "check_N", "check_T", "check_monotonicity", "check_biduality"])
        self.assertIn("check_compatibility", names)
        self.assertTrue(all(r.passed for r in reports), [r.name for r in reports if not r.passed])

    def test_det_minus_r_fails_only_compatibility(self):
        """Test det A - r passes everything except compatibility."""
        reports = run_battery(builtin("det_minus_r", {"G": "G2"}), 400, 1, self.config)
        failed = [r.name for r in reports if not r.passed]
        self.assertEqual(failed, ["check_compatibility"])

    def test_compatible_builtins_pass(self):
        """Test min_eigenvalue, Monge-Ampere, perturbed Monge-Ampere and transport pass the battery."""
        config = AppConfig(samples=2000, stream_size=512)
        pairs = [
            builtin("min_eigenvalue"),
            builtin("monge_ampere"),
            builtin("perturbed_monge_ampere", {"f": 1.0, "M": [["x1", 0], [0, 0]]}, X=Domain.unit(2)),
            builtin("transport"),
        ]
        for pair in pairs:
            with self.subTest(pair=pair.name):
                reports = run_battery(pair, 2000, 1, config)
                self.assertIn("check_biduality", [r.name for r in reports])
                self.assertTrue(all(r.passed for r in reports), [r.name for r in reports if not r.passed])


if __name__ == '__main__':
    unittest.main()
