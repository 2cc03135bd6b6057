"""
Unit tests for monotonicity cones, their duals and strict approximators.
"""

import unittest

import numpy as np

from jetlab.cones import (
    ConeKind, DirectionalCone, MonotonicityCone, Quadratic, cone_dual, cone_interior_member,
    cone_member, sample_cone_member, strict_approximator,
)
from jetlab.errors import InvalidInput
from jetlab.jets import Jet, JetSampler
from jetlab.models import Domain


class TestDirectionalCone(unittest.TestCase):
    """Test the gradient cone D."""

    def test_half_space(self):
        """Test {p1 >= 0} margins."""
        D = DirectionalCone.half_space(2)
        self.assertEqual(float(D.margin([3.0, -7.0])), 3.0)
        self.assertTrue(D.contains([0.0, 1.0]))
        self.assertFalse(D.contains([-1.0, 0.0]))
        np.testing.assert_allclose(D.interior_direction, [1.0, 0.0])

    def test_full_space(self):
        """Test the full-space flag."""
        D = DirectionalCone.full_space(3)
        self.assertTrue(D.full)
        self.assertTrue(np.isinf(D.margin(np.zeros(3))))

    def test_closed_under_addition(self):
        """Test D + D in D on samples."""
        D = DirectionalCone(2, [[1.0, 0.0], [1.0, 1.0]])
        sampler = JetSampler(3)
        p = D.project_in(sampler.normal((500, 2)))
        q = D.project_in(sampler.normal((500, 2)))
        self.assertTrue(np.all(D.margin(p + q) >= -1e-12))

    def test_empty_interior_rejected(self):
        """Test a cone with no interior direction is refused."""
        with self.assertRaises(InvalidInput):
            DirectionalCone(1, [[1.0], [-1.0]])


class TestConeMember(unittest.TestCase):
    """Test cone membership margins."""

    def setUp(self):
        self.n = 2
        self.I = np.eye(2)
        self.e1 = np.array([1.0, 0.0])

    def test_negative_positive(self):
        """Test M(N,P) at (-1, 5 e1, I) has margin 1."""
        M = MonotonicityCone.negative_positive(2)
        self.assertEqual(float(cone_member(M, Jet(-1.0, 5 * self.e1, self.I))), 1.0)

    def test_minimal_cone_excludes_gradients(self):
        """Test M0 rejects p != 0."""
        M = MonotonicityCone.minimal(2)
        self.assertLess(float(cone_member(M, Jet(0.0, self.e1, 0 * self.I))), 0.0)

    def test_directional(self):
        """Test M(D,P) with D = {p1 >= 0} at (3, (-1, 0), I) has margin -1."""
        M = MonotonicityCone.directional(DirectionalCone.half_space(2))
        self.assertEqual(float(cone_member(M, Jet(3.0, -self.e1, self.I))), -1.0)

    def test_interior(self):
        """Test strict membership for M(N,P) and the empty interior of M0."""
        M = MonotonicityCone.negative_positive(2)
        self.assertEqual(float(cone_interior_member(M, Jet(-1.0, [0.0, 0.0], self.I))), 1.0)
        self.assertLessEqual(float(cone_interior_member(M, Jet(0.0, [0.0, 0.0], self.I))), 0.0)
        M0 = MonotonicityCone.minimal(2)
        jets = JetSampler(1).jets(2, 200)
        self.assertTrue(np.all(cone_interior_member(M0, jets) <= 0.0))
        self.assertFalse(M0.has_interior)

    def test_generic_predicate(self):
        """Test a generic cone maps its predicate to +-1."""
        M = MonotonicityCone.generic(2, lambda J: np.trace(J.A, axis1=-2, axis2=-1) >= 0)
        self.assertEqual(float(cone_member(M, Jet(0.0, [0.0, 0.0], self.I))), 1.0)
        self.assertEqual(float(cone_member(M, Jet(0.0, [0.0, 0.0], -self.I))), -1.0)
        self.assertIs(M.kind, ConeKind.GENERIC)

    def test_generic_without_predicate(self):
        """Test a generic cone without predicate is rejected."""
        M = MonotonicityCone(ConeKind.GENERIC, 2)
        with self.assertRaises(InvalidInput):
            cone_member(M, Jet.zeros(2))

    def test_dimension_mismatch(self):
        """Test a jet of the wrong dimension is rejected."""
        with self.assertRaises(InvalidInput):
            cone_member(MonotonicityCone.positive(2), Jet.zeros(3))

    def test_convexity(self):
        """Test t J1 + (1 - t) J2 stays in M for sampled members."""
        sampler = JetSampler(21)
        for M in (MonotonicityCone.negative_positive(2), MonotonicityCone.positive(3),
                  MonotonicityCone.directional(DirectionalCone.half_space(2)),
                  MonotonicityCone.minimal(2)):
            J1 = sample_cone_member(M, sampler, 2000)
            J2 = sample_cone_member(M, sampler, 2000)
            t = sampler.uniform(2000)
            mixed = J1 * t + J2 * (1.0 - t)
            self.assertTrue(np.all(cone_member(M, mixed) >= -1e-12), M.name)

    def test_from_name(self):
        """Test cone lookup by name."""
        self.assertIs(MonotonicityCone.from_name("M(N,P)", 2).kind, ConeKind.M_NP)
        self.assertIs(MonotonicityCone.from_name("MP", 2).kind, ConeKind.M_P)
        with self.assertRaises(InvalidInput):
            MonotonicityCone.from_name("M(Q)", 2)


class TestDualCone(unittest.TestCase):
    """Test closed-form dual cones."""

    def test_dual_of_positive_is_subaffine(self):
        """Test the dual of M(P) is lambda_max(A) >= 0."""
        dual = cone_dual(MonotonicityCone.positive(2))
        self.assertTrue(dual.member(Jet(5.0, [1.0, 1.0], np.diag([-1.0, 0.0]))))
        self.assertFalse(dual.member(Jet(5.0, [1.0, 1.0], np.diag([-1.0, -0.5]))))

    def test_dual_of_negative_positive(self):
        """Test J = (1, 0, -I) is outside and (-2, 0, -I) inside the dual of M(N,P)."""
        dual = cone_dual(MonotonicityCone.negative_positive(2))
        self.assertFalse(dual.member(Jet(1.0, [0.0, 0.0], -np.eye(2))))
        self.assertTrue(dual.member(Jet(-2.0, [0.0, 0.0], -np.eye(2))))

    def test_dual_matches_definition(self):
        """Test J in dual(M) iff -J not in Int M, off the boundary shell."""
        sampler = JetSampler(8)
        for M in (MonotonicityCone.negative_positive(2), MonotonicityCone.positive(2),
                  MonotonicityCone.directional(DirectionalCone.half_space(2), negative=True)):
            J = sampler.jets(2, 3000, 2.0)
            margin = cone_dual(M).margin(J)
            interior = cone_interior_member(M, -J)
            clear = np.abs(margin) > 1e-9
            np.testing.assert_array_equal((margin >= 0)[clear], (interior <= 0)[clear])

    def test_generic_dual(self):
        """Test the sampled dual of a generic cone agrees with M(P)'s closed form."""
        generic = MonotonicityCone.generic(2, lambda J: np.linalg.eigvalsh(J.A)[..., 0] >= 0)
        J = JetSampler(4).jets(2, 500, 2.0)
        closed = cone_dual(MonotonicityCone.positive(2)).margin(J)
        sampled = cone_dual(generic).margin(J)
        clear = np.abs(closed) > 1e-3
        np.testing.assert_array_equal((closed >= 0)[clear], (sampled >= 0)[clear])


class TestStrictApproximator(unittest.TestCase):
    """Test the quadratic strict approximator search."""

    def setUp(self):
        self.domain = Domain((-1.0, -1.0), (1.0, 1.0), 0.25)

    def _assert_strict(self, M, psi):
        nodes = self.domain.points().reshape(-1, 2)
        self.assertTrue(np.all(cone_interior_member(M, psi.jet(nodes)) > 0.0))

    def test_positive(self):
        """Test M(P) accepts psi = 1/2 |x|^2."""
        M = MonotonicityCone.positive(2)
        psi = strict_approximator(M, self.domain)
        self.assertIsInstance(psi, Quadratic)
        self.assertEqual(psi.c, 0.0)
        self._assert_strict(M, psi)

    def test_negative_positive(self):
        """Test M(N,P) needs a shift making psi negative on the box."""
        M = MonotonicityCone.negative_positive(2)
        psi = strict_approximator(M, self.domain)
        self.assertIsNotNone(psi)
        self.assertTrue(np.all(psi.value(self.domain.points()) < 0.0))
        self._assert_strict(M, psi)

    def test_directional(self):
        """Test M(D,P) picks a slope inside D."""
        M = MonotonicityCone.directional(DirectionalCone.half_space(2))
        psi = strict_approximator(M, self.domain)
        self.assertIsNotNone(psi)
        self._assert_strict(M, psi)

    def test_minimal_has_none(self):
        """Test M0 has no strict approximator."""
        self.assertIsNone(strict_approximator(MonotonicityCone.minimal(2), self.domain))


if __name__ == '__main__':
    unittest.main()
