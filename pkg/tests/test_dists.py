import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from mechsolve.dists import (
    QuadratureConfig,
    Tabulated,
    TruncatedGaussian,
    Uniform,
    cdf,
    check_regularity,
    hazard_residual_r,
    integrate,
    inverse_cdf,
    load_table,
    parse_density,
    pdf,
    survival_mass_d,
)
from mechsolve.errors import Nonconvergent, OutOfRange, OutOfSupport, ZeroDensity

GAUSS = TruncatedGaussian(0.0, 10.0, 5.0, 7.0)


def dip_table():
    # pdf dips at x=2, so r jumps from 0.05 at x=1 to 8.5 at x=2 (hand computed)
    return Tabulated.from_points([0.0, 1.0, 2.0, 3.0], [1.0, 1.0, 0.05, 1.0])


def all_densities():
    return [
        Uniform(0.0, 1.0),
        Uniform(0.0, 10.0),
        Uniform(2.0, 5.0),
        GAUSS,
        TruncatedGaussian(0.0, 4.0, 1.0, 0.8),
        dip_table(),
        Tabulated.from_points([0.0, 0.5, 2.0], [2.0, 1.0, 0.2]),
    ]


class TestPointwise:
    def test_uniform_pdf(self):
        assert pdf(Uniform(0, 1), 0.3) == 1.0
        assert pdf(Uniform(0, 10), 4.0) == pytest.approx(0.1, abs=1e-15)

    def test_gaussian_pdf_matches_numeric_normalization(self):
        xs = np.linspace(0.0, 10.0, 1_000_001)
        raw = np.exp(-0.5 * ((xs - 5.0) / 7.0) ** 2) / (7.0 * math.sqrt(2 * math.pi))
        mass = np.trapezoid(raw, xs)
        expected = 1.0 / (7.0 * math.sqrt(2 * math.pi)) / mass
        assert pdf(GAUSS, 5.0) == pytest.approx(expected, rel=1e-9)

    def test_cdf_examples(self):
        assert cdf(Uniform(0, 1), 0.25) == 0.25
        assert cdf(GAUSS, 5.0) == pytest.approx(0.5, abs=1e-14)
        for dist in all_densities():
            assert cdf(dist, dist.support_lo) == 0.0
            assert cdf(dist, dist.support_hi) == 1.0

    def test_inverse_cdf_examples(self):
        assert inverse_cdf(Uniform(0, 10), 0.6) == pytest.approx(6.0, abs=1e-12)
        assert inverse_cdf(GAUSS, cdf(GAUSS, 3.0)) == pytest.approx(3.0, abs=1e-10)
        for dist in all_densities():
            assert inverse_cdf(dist, 1.0) == dist.support_hi
            assert inverse_cdf(dist, 0.0) == dist.support_lo

    def test_out_of_support(self):
        with pytest.raises(OutOfSupport):
            pdf(Uniform(0, 1), 1.5)
        with pytest.raises(OutOfSupport):
            cdf(GAUSS, -0.1)
        with pytest.raises(OutOfSupport):
            survival_mass_d(GAUSS, 10.5)
        with pytest.raises(OutOfRange):
            inverse_cdf(GAUSS, 1.2)
        with pytest.raises(OutOfRange):
            inverse_cdf(GAUSS, -1e-9)

    def test_object_methods_extend_by_zero(self):
        assert GAUSS.pdf(-1.0) == 0.0 and GAUSS.pdf(11.0) == 0.0
        assert GAUSS.cdf(-1.0) == 0.0 and GAUSS.cdf(11.0) == 1.0


class TestHazard:
    def test_uniform_d_and_r(self):
        u01 = Uniform(0, 1)
        assert survival_mass_d(u01, 0.3) == pytest.approx(0.4, abs=1e-15)
        assert hazard_residual_r(u01, 0.3) == pytest.approx(0.4, abs=1e-15)
        assert hazard_residual_r(u01, 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_d_at_zero_is_one(self):
        for dist in all_densities():
            if dist.support_lo == 0:
                assert survival_mass_d(dist, 0.0) == 1.0

    def test_gaussian_composites(self):
        assert survival_mass_d(GAUSS, 5.0) == pytest.approx(0.5 - 5.0 * pdf(GAUSS, 5.0), abs=1e-14)
        assert hazard_residual_r(GAUSS, 2.0) == pytest.approx(
            survival_mass_d(GAUSS, 2.0) / pdf(GAUSS, 2.0), rel=1e-12
        )

    def test_zero_density(self):
        tiny = Tabulated.from_points([0.0, 1.0, 2.0], [1.0, 1e-14, 1.0])
        with pytest.raises(ZeroDensity):
            hazard_residual_r(tiny, 1.0)

    def test_r_times_g_is_d(self):
        for dist in all_densities():
            for u in np.linspace(dist.support_lo, dist.support_hi, 41):
                g = pdf(dist, u)
                assert hazard_residual_r(dist, u) * g == pytest.approx(survival_mass_d(dist, u), abs=1e-9)


class TestRegularity:
    def test_uniform(self):
        assert check_regularity(Uniform(0, 1), 100).ok

    def test_gaussian(self):
        assert check_regularity(GAUSS, 200).ok

    def test_dip_table_flags_first_rise(self):
        report = check_regularity(dip_table(), 4)
        assert not report.ok
        assert report.first_violation == (1.0, 2.0)
        assert hazard_residual_r(dip_table(), 1.0) == pytest.approx(0.05, abs=1e-12)
        assert hazard_residual_r(dip_table(), 2.0) == pytest.approx(8.5, abs=1e-12)

    def test_grid_too_small(self):
        with pytest.raises(ValueError):
            check_regularity(GAUSS, 1)


class TestIntegrate:
    def test_examples(self):
        assert integrate(lambda x: 1.0, 0.0, 1.0) == pytest.approx(1.0, abs=1e-12)
        assert integrate(lambda x: x, 0.0, 2.0) == pytest.approx(2.0, abs=1e-12)
        assert integrate(GAUSS.pdf, 0.0, 10.0) == pytest.approx(1.0, abs=1e-9)

    def test_empty_and_reversed(self):
        assert integrate(math.exp, 3.0, 3.0) == 0.0
        with pytest.raises(ValueError):
            integrate(math.exp, 1.0, 0.0)

    def test_breaks_handle_kinks(self):
        val = integrate(lambda x: abs(x - 0.3), 0.0, 1.0, breaks=(0.3,))
        assert val == pytest.approx(0.5 * 0.09 + 0.5 * 0.49, abs=1e-12)

    def test_nonconvergent(self):
        cfg = QuadratureConfig(abs_tol=1e-14, max_subdivisions=4)
        with pytest.raises(Nonconvergent):
            integrate(math.sqrt, 0.0, 1.0, cfg)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            QuadratureConfig(abs_tol=0.0)
        with pytest.raises(ValueError):
            QuadratureConfig(max_subdivisions=0)

    @pytest.mark.parametrize("dist", all_densities(), ids=lambda d: d.to_string() if d.kind != "table" else "table")
    def test_normalization(self, dist):
        breaks = getattr(dist, "xs", ())
        assert integrate(dist.pdf, dist.support_lo, dist.support_hi, breaks=breaks) == pytest.approx(1.0, abs=1e-9)


class TestConsistency:
    @pytest.mark.parametrize("dist", all_densities(), ids=str)
    def test_cdf_derivative_is_pdf(self, dist):
        h = 1e-6
        lo, hi = dist.support_lo, dist.support_hi
        for x in np.linspace(lo, hi, 37)[1:-1]:
            deriv = (dist.cdf(x + h) - dist.cdf(x - h)) / (2 * h)
            assert deriv == pytest.approx(dist.pdf(x), abs=1e-4)

    @pytest.mark.parametrize("dist", all_densities(), ids=str)
    def test_round_trip(self, dist):
        for x in np.linspace(dist.support_lo, dist.support_hi, 53)[1:-1]:
            assert abs(inverse_cdf(dist, cdf(dist, x)) - x) <= 1e-8

    @pytest.mark.parametrize("dist", all_densities(), ids=str)
    def test_partial_mean_matches_quadrature(self, dist):
        breaks = getattr(dist, "xs", ())
        for x in np.linspace(dist.support_lo, dist.support_hi, 7):
            expected = integrate(lambda t: t * dist.pdf(t), dist.support_lo, x, breaks=breaks)
            assert dist.partial_mean(x) == pytest.approx(expected, abs=1e-9)


# location within a few widths of the support keeps the truncation mass well away from zero
gauss_params = st.tuples(st.floats(0.5, 20.0), st.floats(-1.0, 2.0), st.floats(0.05, 3.0)).map(
    lambda p: TruncatedGaussian(0.0, p[0], p[1] * p[0], p[2] * p[0])
)
tables = st.lists(st.floats(0.05, 5.0), min_size=2, max_size=8).map(
    lambda ps: Tabulated.from_points(np.linspace(0.0, 3.0, len(ps)), ps)
)
densities = st.one_of(gauss_params, tables, st.floats(0.1, 20.0).map(lambda hi: Uniform(0.0, hi)))


@settings(max_examples=60, deadline=None)
@given(densities, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_cdf_monotone_exactly(dist, s, t):
    span = dist.support_hi - dist.support_lo
    x1, x2 = sorted((dist.support_lo + s * span, dist.support_lo + t * span))
    assert dist.cdf(x1) <= dist.cdf(x2)


@settings(max_examples=300, deadline=None)
@given(densities, st.floats(0.01, 0.99))
def test_round_trip_property(dist, s):
    x = dist.support_lo + s * (dist.support_hi - dist.support_lo)
    q, density = dist.cdf(x), dist.pdf(x)
    # where the cdf rounds to an endpoint or the density underflows, x is not recoverable
    assume(0.0 < q < 1.0 and density > 0)
    # a stored cdf value only pins x down to within one ulp of q divided by the slope
    conditioning = 4 * math.ulp(q) / density
    assert abs(dist.ppf(q) - x) <= 1e-8 + conditioning


@settings(max_examples=60, deadline=None)
@given(densities, st.floats(0.0, 1.0))
def test_r_g_equals_d_property(dist, s):
    u = dist.support_lo + s * (dist.support_hi - dist.support_lo)
    g = dist.pdf(u)
    if g > 1e-12:
        assert hazard_residual_r(dist, u) * g == pytest.approx(survival_mass_d(dist, u), abs=1e-9)


class TestParsing:
    def test_uniform_and_gauss(self):
        assert parse_density("uniform:0,1") == Uniform(0.0, 1.0)
        assert parse_density("gauss:0,10,5,7") == GAUSS
        assert parse_density(GAUSS.to_string()) == GAUSS

    def test_table_round_trip(self, tmp_path):
        path = tmp_path / "g.csv"
        path.write_text("x,pdf\n0,1\n1,2\n2,1\n", encoding="utf-8")
        dist = parse_density(f"table:{path}")
        assert dist.support_lo == 0.0 and dist.support_hi == 2.0
        assert dist.pdf(1.0) == pytest.approx(2.0 / 3.0)
        assert parse_density(dist.to_string()) == dist
        assert load_table(path) == dist

    @pytest.mark.parametrize(
        "text", ["uniform:1", "gauss:0,10,5", "beta:1,2", "uniform", "uniform:a,b", "uniform:1,0", "gauss:0,1,0,-1"]
    )
    def test_bad_specs(self, text):
        with pytest.raises(ValueError):
            parse_density(text)

    def test_bad_table(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,density\n0,1\n1,1\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_table(path)
        path.write_text("x,pdf\n0,1\n0,1\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_table(path)
        path.write_text("x,pdf\n0,1\n1,0\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_table(path)
