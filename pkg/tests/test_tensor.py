from __future__ import annotations

import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from curvens import catalog
from curvens.errors import DerivativeOverflow, DomainError, SingularMetric, UnsupportedPerturbation
from curvens.tensor import (
    Cell,
    DerivativeMode,
    MetricField,
    Perturbation,
    Signature,
    absolute_metric,
    cell_average_scalar,
    cell_first_variation,
    cell_volume,
    curvature_at,
    curvature_on,
    first_variation,
    perturbed_field,
    ricci_norm,
)

from oracles import sympy_curvature, wormhole_scalar

t, x1, x2, x3 = catalog.COORDS
finite = dict(allow_nan=False, allow_infinity=False)


class TestFlat:
    @pytest.mark.parametrize("factory", [catalog.make_minkowski, catalog.make_euclidean4])
    @given(st.lists(st.floats(-50, 50, **finite), min_size=4, max_size=4))
    @settings(max_examples=25, deadline=None)
    def test_cartesian_curvature_vanishes(self, factory, point):
        b = curvature_at(factory(), point)
        assert np.all(b.christoffel == 0)
        assert np.all(b.ricci == 0)
        assert b.scalar == 0

    @given(st.floats(0.1, 20), st.floats(0.1, math.pi - 0.1), st.floats(-3, 3))
    @settings(max_examples=25, deadline=None)
    def test_spherical_chart_is_flat(self, r, theta, phi):
        b = curvature_at(catalog.make_flat_spherical(), [0.0, r, theta, phi])
        assert np.max(np.abs(b.ricci)) <= 1e-12 * max(1.0, 1 / r**2)
        assert_allclose(b.sqrt_abs_det, r * r * math.sin(theta), rtol=1e-14)

    def test_minkowski_report_is_all_zeros(self):
        d = curvature_at(catalog.make_minkowski(), [0, 1, 1, 1]).as_dict()
        assert np.all(np.array(d["ricci"]) == 0) and d["scalar"] == 0


class TestKnownCurvature:
    def test_unit_three_sphere_times_line(self):
        chi, th = x1, x2
        m = sp.diag(-1, 1, sp.sin(chi) ** 2, sp.sin(chi) ** 2 * sp.sin(th) ** 2)
        fld = catalog.symbolic_metric("s3xR", m)
        for chi0 in (0.4, 1.0, 2.2):
            assert_allclose(curvature_at(fld, [0, chi0, 1.1, 0.3]).scalar, 6.0, rtol=1e-12)

    def test_wormhole_example_point(self):
        b = curvature_at(catalog.make_wormhole_static(1.0), [0, 1, 1.0, 0])
        assert_allclose(b.scalar, -4.0, rtol=1e-13)

    @given(st.floats(-1, 1))
    @settings(max_examples=40, deadline=None)
    def test_wormhole_scalar_closed_form(self, rho):
        b = curvature_at(catalog.make_wormhole_static(1.0), [0, rho, 1.3, 0])
        assert_allclose(b.scalar, -16 * rho**2 / (1 + rho**2) ** 2, atol=1e-12)
        assert_allclose(b.scalar, wormhole_scalar(rho), atol=1e-12)

    def test_throat_has_zero_scalar_but_nonzero_ricci(self):
        b = curvature_at(catalog.make_wormhole_static(1.0), [0, 0, 1.0, 0])
        assert abs(b.scalar) < 1e-14
        assert_allclose(b.ricci[1, 1], -4.0, rtol=1e-13)
        assert_allclose(b.ricci[2, 2], 0.5, rtol=1e-13)

    @pytest.mark.parametrize("M", [0.5, 1.0, 3.0])
    def test_schwarzschild_is_vacuum(self, M):
        r = np.linspace(2.5 * M, 50 * M, 40)
        pts = np.stack([0 * r, r, 0 * r + 1.0, 0 * r], -1)
        b = curvature_on(catalog.make_schwarzschild(M), pts)
        assert np.max(np.abs(b.ricci)) <= 1e-10

    def test_schwarzschild_example_point(self):
        b = curvature_at(catalog.make_schwarzschild(1.0), [0, 4, 1.0, 0])
        assert np.max(np.abs(b.ricci)) <= 1e-12


class TestAgainstSympyOracle:
    """Numbers frozen by comparison with a from-scratch Riemann computation."""

    CASES = [
        ("rotating-lorentzian", lambda: catalog.make_wormhole_rotating(0.2), [0, 0.3, 0.9, 0.0]),
        ("rotating-euclidean", lambda: catalog.make_wormhole_rotating(0.25, True), [0, -0.6, 2.0, 0.0]),
        ("exterior", lambda: catalog.make_exterior_particle(0.4, 1.0), [0, 1.7, 1.2, 0.0]),
    ]

    @staticmethod
    def _matrix(name):
        rho, th = x1, x2
        f = (1 + rho**2) / 2
        if name == "rotating-lorentzian":
            v = sp.Rational(1, 5)
            return sp.Matrix([[-(1 - v**2), -v * sp.cos(th), v * rho * sp.sin(th), 0], [-v * sp.cos(th), 1, 0, 0],
                              [v * rho * sp.sin(th), 0, f**2, 0], [0, 0, 0, f**2 * sp.sin(th) ** 2]])
        if name == "rotating-euclidean":
            v = sp.Rational(1, 4)
            return sp.Matrix([[1 - v**2, -v * sp.cos(th), v * rho * sp.sin(th), 0], [-v * sp.cos(th), 1, 0, 0],
                              [v * rho * sp.sin(th), 0, f**2, 0], [0, 0, 0, f**2 * sp.sin(th) ** 2]])
        r = x1
        a = 2 * sp.Rational(2, 5) / r - sp.Rational(2, 5) / r**2
        return sp.diag(-(1 - a), 1 / (1 - a), r**2, r**2 * sp.sin(th) ** 2)

    @pytest.mark.parametrize("name,factory,point", CASES, ids=[c[0] for c in CASES])
    def test_matches_oracle(self, name, factory, point):
        ricci, scalar = sympy_curvature(self._matrix(name), catalog.COORDS, point)
        b = curvature_at(factory(), point)
        assert_allclose(b.ricci, ricci, atol=1e-11)
        assert_allclose(b.scalar, scalar, atol=1e-11)


class TestFiniteDifferences:
    @pytest.mark.parametrize(
        "fld,point",
        [
            (catalog.make_wormhole_rotating(0.3), [0, 0.2, 1.0, 0]),
            (catalog.make_schwarzschild(1.0), [0, 5.0, 0.7, 0]),
            (catalog.make_wormhole_static(1.0), [0, 0.5, 1.0, 0]),
        ],
    )
    def test_fd_matches_analytic(self, fld, point):
        exact = curvature_at(fld, point)
        fd_field = fld.with_finite_differences()
        assert fd_field.derivative_mode is DerivativeMode.FINITE_DIFFERENCE
        approx = curvature_at(fd_field, point)
        assert_allclose(approx.ricci, exact.ricci, atol=1e-6)
        assert_allclose(approx.scalar, exact.scalar, atol=1e-6)

    def test_field_without_derivatives_uses_fd(self):
        fld = MetricField("flat", lambda p: np.broadcast_to(np.diag([-1.0, 1, 1, 1]), p.shape[:-1] + (4, 4)))
        assert fld.derivative_mode is DerivativeMode.FINITE_DIFFERENCE
        assert abs(curvature_at(fld, [0, 1, 2, 3]).scalar) < 1e-12

    def test_stencil_leaving_chart_raises(self):
        fld = catalog.make_wormhole_static(1.0).with_finite_differences(1e-3)
        with pytest.raises(DerivativeOverflow):
            curvature_at(fld, [0, 1.0, 1.0, 0])


class TestProperties:
    @given(st.floats(0.25, 4.0), st.floats(-0.9, 0.9), st.floats(0.3, 2.8))
    @settings(max_examples=30, deadline=None)
    def test_constant_rescaling(self, c, rho, theta):
        base = catalog.make_wormhole_static(1.0)
        scaled = MetricField(
            "scaled",
            lambda p: c * base.component_fn(p),
            derivative_fn=lambda p: tuple(c * d for d in base.derivative_fn(p)),
            domain=base.domain,
        )
        pt = [0, rho, theta, 0]
        b0, b1 = curvature_at(base, pt), curvature_at(scaled, pt)
        # Christoffels and Ricci are invariant, R scales as 1/c
        assert_allclose(b1.ricci, b0.ricci, atol=1e-12)
        assert_allclose(b1.scalar, b0.scalar / c, atol=1e-12)

    @given(st.floats(0.0, 0.3), st.floats(-1, 1), st.floats(0.2, 2.9), st.booleans())
    @settings(max_examples=30, deadline=None)
    def test_ricci_symmetric_and_trace(self, v, rho, theta, euclid):
        b = curvature_at(catalog.make_wormhole_rotating(v, euclid), [0, rho, theta, 0.4])
        assert_allclose(b.ricci, b.ricci.T, atol=1e-14)
        assert_allclose(b.scalar, np.einsum("ij,ij->", b.inverse, b.ricci), atol=1e-12)
        assert_allclose(b.christoffel, np.swapaxes(b.christoffel, -1, -2), atol=1e-14)

    def test_batched_equals_pointwise(self):
        fld = catalog.make_wormhole_rotating(0.1)
        pts = np.array([[0, -0.5, 0.8, 0], [0, 0.1, 2.0, 1.0], [0, 0.9, 1.5, 2.0]])
        batch = curvature_on(fld, pts)
        for k, p in enumerate(pts):
            assert_allclose(batch.scalar[k], curvature_at(fld, p).scalar, rtol=1e-14)

    def test_absolute_metric_is_positive_definite(self):
        g = catalog.make_wormhole_rotating(0.3).component_fn(np.array([0, 0.4, 1.0, 0.0]))
        h = absolute_metric(g)
        assert np.all(np.linalg.eigvalsh(h) > 0)
        assert_allclose(np.abs(np.linalg.det(h)), np.abs(np.linalg.det(g)), rtol=1e-12)

    def test_ricci_norm(self):
        b = curvature_at(catalog.make_wormhole_static(1.0), [0, 0, 1.0, 0])
        # R_ij = diag(0, -4, 1/2, 1/2 sin^2) against the spatial metric diag(1, 1, 1/4, sin^2/4)
        assert_allclose(ricci_norm(b), math.sqrt(16 + 4 + 4), rtol=1e-12)


class TestErrors:
    def test_outside_chart(self):
        with pytest.raises(DomainError):
            curvature_at(catalog.make_schwarzschild(1.0), [0, 1.5, 1.0, 0])
        with pytest.raises(DomainError):
            curvature_at(catalog.make_wormhole_static(1.0), [0, 1.5, 1.0, 0])

    def test_bad_point_shape(self):
        with pytest.raises(DomainError):
            curvature_at(catalog.make_minkowski(), [0, 1, 2])

    def test_singular_metric(self):
        fld = MetricField("degenerate", lambda p: np.broadcast_to(np.diag([-1.0, 1, 1, 0]), p.shape[:-1] + (4, 4)))
        with pytest.raises(SingularMetric):
            curvature_at(fld, [0, 0, 0, 0])

    def test_signature_metadata(self):
        assert catalog.make_euclidean4().signature is Signature.EUCLIDEAN
        assert catalog.make_minkowski().signature is Signature.LORENTZIAN


class TestFirstVariation:
    """The cell-constant first variation R_ij dg^ij is checked against the exact
    derivative of the cell-averaged scalar curvature along a smooth bump."""

    delta = np.diag([0.0, 1.0, 0.6, -0.3]) + 0.2 * (np.eye(4, k=1) + np.eye(4, k=-1))

    def _pert(self, center, half):
        return Perturbation(self.delta, Cell(center, half))

    def test_exact_derivative_matches_finite_difference(self):
        fld = catalog.make_wormhole_static(1.0)
        pert = self._pert([0, 0.1, 1.2, 0.3], 0.05)
        exact = cell_first_variation(fld, pert, nodes=8)
        vol = cell_volume(fld, pert.support)
        eps = 1e-5
        plus = cell_average_scalar(perturbed_field(fld, pert, eps), pert.support, 8, vol)
        minus = cell_average_scalar(perturbed_field(fld, pert, -eps), pert.support, 8, vol)
        assert_allclose((plus - minus) / (2 * eps), exact, rtol=1e-4, atol=1e-6)

    def test_small_cell_reduces_to_centre_value(self):
        fld = catalog.make_wormhole_static(1.0)
        pert = self._pert([0, 0.0, 1.0, 0.0], 1e-3)
        # R = 0 at the throat, so only R_ij dg^ij survives
        fv = first_variation(fld, pert, cell_volume(fld, pert.support))
        assert_allclose(fv, -4.0 * 1.0 + 0.5 * 0.6 + 0.5 * math.sin(1.0) ** 2 * -0.3, rtol=1e-12)
        assert_allclose(cell_first_variation(fld, pert), fv, rtol=1e-4)

    def test_flat_background_has_zero_variation(self):
        pert = self._pert([0, 1, 2, 3], 0.5)
        assert first_variation(catalog.make_minkowski(), pert, 1.0) == 0.0

    def test_cell_leaving_chart(self):
        with pytest.raises(UnsupportedPerturbation):
            first_variation(catalog.make_wormhole_static(1.0), self._pert([0, 0.98, 1.0, 0], 0.05), 1.0)

    def test_norm_is_positive_for_lorentzian_metric(self):
        pert = Perturbation(np.diag([1.0, -1.0, 0, 0]), Cell([0, 0, 0, 0], 0.1))
        assert_allclose(pert.norm(np.diag([-1.0, 1, 1, 1])), math.sqrt(2), rtol=1e-14)

    def test_asymmetric_delta_rejected(self):
        with pytest.raises(ValueError):
            Perturbation(np.eye(4, k=1), Cell([0, 0, 0, 0], 0.1))
