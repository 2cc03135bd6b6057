"""
Unit tests for subequations, duality, induced sets and the builtin pairs.
"""

import unittest

import numpy as np

from jetlab.cones import MonotonicityCone
from jetlab.errors import FiberDegenerate, InvalidCoefficient, InvalidInput, OutOfDomain, PreconditionError
from jetlab.jets import Jet, JetSampler, lambda_max, lambda_min, sym_det
from jetlab.models import Domain
from jetlab.subequations import (
    Membership, Subequation, boundary_probe, builtin, cone_subequation, dual, dual_cone_subequation,
    flat_to_jet, induce, jet_to_flat, member, oracle_dual, oracle_subequation, signed_distance_operator,
)

ORIGIN = np.zeros(2)


def _jet(A, r=0.0, p=(0.0, 0.0)):
    return Jet(r, np.array(p, dtype=float), np.array(A, dtype=float))


class TestMembership(unittest.TestCase):
    """Test tri-state membership."""

    def setUp(self):
        self.H = induce(builtin("laplace"))
        self.P = induce(builtin("min_eigenvalue"))

    def test_laplace_exterior(self):
        """Test H at diag(1, -2) is exterior with margin -1."""
        result = member(self.H, ORIGIN, _jet(np.diag([1.0, -2.0])))
        self.assertIs(result.status, Membership.EXTERIOR)
        self.assertEqual(result.margin, -1.0)

    def test_convexity_interior_and_boundary(self):
        """Test P at diag(2, 3) is interior and at diag(0, 3) on the shell."""
        result = member(self.P, ORIGIN, _jet(np.diag([2.0, 3.0])))
        self.assertIs(result.status, Membership.INTERIOR)
        self.assertAlmostEqual(result.margin, 2.0)
        self.assertIs(member(self.P, ORIGIN, _jet(np.diag([0.0, 3.0]))).status, Membership.BOUNDARY)

    def test_outside_domain(self):
        """Test a base point outside X is refused."""
        F = induce(builtin("laplace", X=Domain.unit(2)))
        with self.assertRaises(OutOfDomain):
            F.margin([2.0, 2.0], Jet.zeros(2))

    def test_batch_member_refused(self):
        """Test member wants a single jet."""
        with self.assertRaises(InvalidInput):
            member(self.H, ORIGIN, Jet.zeros(2, (3,)))

    def test_oracle_subequation(self):
        """Test an oracle-only set classifies by probing along J0."""
        F = oracle_subequation("H-oracle", 2, lambda x, J: np.trace(J.A, axis1=-2, axis2=-1) >= 0,
                               cone=MonotonicityCone.positive(2))
        self.assertEqual(float(F.margin(ORIGIN, _jet(np.eye(2)))), 1.0)
        self.assertEqual(float(F.margin(ORIGIN, _jet(np.diag([1.0, -1.0])))), 0.0)
        self.assertEqual(float(F.margin(ORIGIN, _jet(-np.eye(2)))), -1.0)

    def test_needs_a_representation(self):
        """Test a set without margin or oracle is rejected."""
        with self.assertRaises(InvalidInput):
            Subequation("empty", 2)


class TestDuality(unittest.TestCase):
    """Test Dirichlet duals."""

    def setUp(self):
        self.jets = JetSampler(5).mixture(2, 5000, 10.0 / 3.0)

    def test_laplace_self_dual(self):
        """Test dual(H) has the defining function tr A."""
        H = induce(builtin("laplace"))
        np.testing.assert_array_equal(dual(H).margin(ORIGIN, self.jets), H.margin(ORIGIN, self.jets))

    def test_dual_of_convexity_is_subaffine(self):
        """Test dual(P) = {lambda_max(A) >= 0}."""
        P = induce(builtin("min_eigenvalue"))
        np.testing.assert_allclose(P.dual().margin(ORIGIN, self.jets), lambda_max(self.jets.A), atol=1e-12)

    def test_query_built_dual_matches_closed_form(self):
        """Test the dual rebuilt from membership queries agrees with F.dual() off the boundary."""
        F = induce(builtin("monge_ampere"))
        queried = oracle_dual(F)
        decided = np.abs(F.margin(ORIGIN, -self.jets)) > 1e-3
        self.assertGreater(int(np.sum(decided)), 1000)
        np.testing.assert_array_equal(queried.contains(ORIGIN, self.jets)[decided],
                                      F.dual().contains(ORIGIN, self.jets)[decided])

    def test_query_built_double_dual_of_monge_ampere(self):
        """Test dual(dual(F)) built from queries reproduces F off the boundary."""
        F = induce(builtin("monge_ampere"))
        twice = oracle_dual(oracle_dual(F))
        self.assertEqual(twice.name, f"dual(dual({F.name}))")
        decided = np.abs(F.margin(ORIGIN, self.jets)) > 1e-3
        np.testing.assert_array_equal(np.asarray(twice.oracle(ORIGIN, self.jets))[decided],
                                      F.contains(ORIGIN, self.jets)[decided])

    def test_query_built_dual_of_convexity_oracle(self):
        """Test the queried dual of a pure convexity oracle is {lambda_max(A) >= 0}."""
        P = oracle_subequation("convexity", 2, lambda x, J: lambda_min(J.A) >= 0.0,
                               cone=MonotonicityCone.positive(2))
        queried = oracle_dual(P)
        top = lambda_max(self.jets.A)
        decided = np.abs(top) > 1e-3
        np.testing.assert_array_equal(np.asarray(queried.oracle(ORIGIN, self.jets))[decided],
                                      (top >= 0.0)[decided])
        twice = oracle_dual(queried)
        low = lambda_min(self.jets.A)
        decided = np.abs(low) > 1e-3
        np.testing.assert_array_equal(np.asarray(twice.oracle(ORIGIN, self.jets))[decided],
                                      (low >= 0.0)[decided])

    def test_dual_formula(self):
        """Test the dual margin is -F(x, -J)."""
        F = induce(builtin("monge_ampere"))
        np.testing.assert_array_equal(F.dual().margin(ORIGIN, self.jets), -F.margin(ORIGIN, -self.jets))
        self.assertEqual(F.dual().cone, F.cone)

    def test_cone_dual_subequation(self):
        """Test the closed-form cone dual agrees with the computed dual off the shell."""
        M = MonotonicityCone.negative_positive(2)
        computed = cone_subequation(M).dual().margin(ORIGIN, self.jets)
        closed = dual_cone_subequation(M).margin(ORIGIN, self.jets)
        clear = np.abs(computed) > 1e-8
        np.testing.assert_array_equal((computed >= 0)[clear], (closed >= 0)[clear])


class TestInduce(unittest.TestCase):
    """Test induced sets of the builtin pairs."""

    def test_perturbed_monge_ampere_fibers(self):
        """Test fibers {A + M(x) >= 0, det(A + M(x)) >= f(x)}."""
        pair = builtin("perturbed_monge_ampere", {"f": 1.0, "M": [["x1", 0], [0, "x2"]]})
        F = induce(pair)
        x = np.array([0.5, 0.5])
        self.assertGreater(float(F.margin(x, _jet(np.diag([1.5, 1.5])))), 0.0)
        self.assertLess(float(F.margin(x, _jet(np.diag([0.0, 0.0])))), 0.0)
        self.assertEqual(pair.case, "constrained")
        self.assertFalse(pair.constant_coefficients)

    def test_det_minus_r_vertex_jet(self):
        """Test (r, A) = (-1, 0) has F = 1 but is not interior to the induced set."""
        pair = builtin("det_minus_r", {"G": "G2"})
        J = Jet(-1.0, [0.0, 0.0], np.zeros((2, 2)))
        self.assertEqual(float(pair.evaluate(ORIGIN, J)), 1.0)
        self.assertIsNot(member(induce(pair), ORIGIN, J).status, Membership.INTERIOR)

    def test_det_minus_r_variants(self):
        """Test G1 adds r <= 0 to the constraint."""
        J = Jet(1.0, [0.0, 0.0], 2 * np.eye(2))
        self.assertGreater(float(induce(builtin("det_minus_r", {"G": "G2"})).margin(ORIGIN, J)), 0.0)
        self.assertLess(float(induce(builtin("det_minus_r", {"G": "G1"})).margin(ORIGIN, J)), 0.0)
        with self.assertRaises(InvalidInput):
            builtin("det_minus_r", {"G": "G3"})

    def test_transport(self):
        """Test g(p) det A - f with the default D = {p1 >= 0}."""
        pair = builtin("transport")
        J = Jet(0.0, [2.0, 5.0], np.eye(2))
        self.assertAlmostEqual(float(pair.evaluate(ORIGIN, J)), 1.0)
        self.assertLess(float(pair.constraint_margin(ORIGIN, Jet(0.0, [-1.0, 0.0], np.eye(2)))), 0.0)
        self.assertEqual(pair.cone.name, "M(D,P)")

    def test_negative_f_rejected(self):
        """Test f < 0 is an invalid coefficient."""
        with self.assertRaises(InvalidCoefficient):
            builtin("monge_ampere", {"f": "x1 - 0.5"})

    def test_unknown_builtin(self):
        """Test unknown operator names."""
        with self.assertRaises(InvalidInput):
            builtin("hessian_quotient")

    def test_pair_cones(self):
        """Test the cone wired into each builtin."""
        self.assertEqual(builtin("laplace").cone.name, "M(P)")
        self.assertEqual(builtin("monge_ampere").cone.name, "M(P)")
        self.assertEqual(builtin("det_minus_r").cone.name, "M(N,P)")
        np.testing.assert_array_equal(builtin("det_minus_r").probe.A, np.eye(2))


class TestBoundaryProbe(unittest.TestCase):
    """Test bisection onto fiber boundaries."""

    def test_laplace(self):
        """Test I to -I lands on tr A = 0."""
        H = induce(builtin("laplace"))
        J = boundary_probe(H, ORIGIN, _jet(np.eye(2)), _jet(-np.eye(2)))
        self.assertLessEqual(abs(float(np.trace(J.A))), 1e-12)

    def test_convexity(self):
        """Test diag(1, 1) to diag(-1, 1) crosses at diag(0, 1)."""
        P = induce(builtin("min_eigenvalue"))
        J = boundary_probe(P, ORIGIN, _jet(np.diag([1.0, 1.0])), _jet(np.diag([-1.0, 1.0])))
        np.testing.assert_allclose(J.A, np.diag([0.0, 1.0]), atol=1e-12)

    def test_monge_ampere(self):
        """Test the ray 2I to -I crosses at det = 1."""
        F = induce(builtin("monge_ampere", {"f": 1.0}))
        J = boundary_probe(F, ORIGIN, _jet(2 * np.eye(2)), _jet(-np.eye(2)))
        self.assertAlmostEqual(float(sym_det(J.A)), 1.0, places=9)

    def test_preconditions(self):
        """Test endpoints on the wrong sides are refused."""
        H = induce(builtin("laplace"))
        with self.assertRaises(PreconditionError):
            boundary_probe(H, ORIGIN, _jet(-np.eye(2)), _jet(np.eye(2)))


class TestSignedDistance(unittest.TestCase):
    """Test the signed distance operator."""

    def setUp(self):
        self.H = induce(builtin("laplace"))
        self.distance = signed_distance_operator(self.H)

    def test_half_space_distance(self):
        """Test the distance to {tr A >= 0} is tr(A) / |I|_F."""
        value = float(self.distance(ORIGIN, _jet(np.diag([1.0, 2.0]))))
        self.assertAlmostEqual(value, 3.0 / np.sqrt(2.0), places=6)

    def test_signs(self):
        """Test exterior jets are negative and shell jets are zero."""
        self.assertLess(float(self.distance(ORIGIN, _jet(np.diag([-1.0, -2.0])))), 0.0)
        self.assertEqual(float(self.distance(ORIGIN, _jet(np.diag([1.0, -1.0])))), 0.0)

    def test_induced_membership_agrees(self):
        """Test the signed-distance set has the same members as F."""
        S = induce(builtin("signed_distance", {"of": "laplace"}))
        jets = JetSampler(12).jets(2, 200, 3.0)
        margin = self.H.margin(ORIGIN, jets)
        clear = np.abs(margin) > 1e-6
        np.testing.assert_array_equal((S.margin(ORIGIN, jets) >= 0)[clear], (margin >= 0)[clear])

    def test_convexity_distance(self):
        """Test the distance to P at diag(-1, 2) is 1."""
        P = induce(builtin("min_eigenvalue"))
        value = float(signed_distance_operator(P)(ORIGIN, _jet(np.diag([-1.0, 2.0]))))
        self.assertAlmostEqual(value, -1.0, places=6)

    def test_full_fiber(self):
        """Test a fiber equal to all of jet space is degenerate."""
        everything = Subequation("everything", 2, margin_fn=lambda x, J: np.ones(J.batch_shape))
        with self.assertRaises(FiberDegenerate):
            signed_distance_operator(everything)(ORIGIN, Jet.zeros(2))

    def test_flat_coordinates_are_isometric(self):
        """Test the flat coordinates preserve the Euclidean jet norm."""
        jets = JetSampler(2).jets(3, 50)
        z = jet_to_flat(jets)
        np.testing.assert_allclose(np.linalg.norm(z, axis=-1), jets.euclidean_norm())
        np.testing.assert_allclose(flat_to_jet(z, 3).A, jets.A)


if __name__ == '__main__':
    unittest.main()
