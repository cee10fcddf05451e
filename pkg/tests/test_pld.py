import numpy as np
import pytest

import dpacct
from dpacct import (
    ConfigError,
    Direction,
    GaussianPair,
    GridMismatch,
    GridSpec,
    GridTooNarrow,
    Rounding,
    RoundingMismatch,
    SubsampledGaussianPair,
    compose_fft,
    compose_fourier,
    delta_from_pld,
    delta_plancherel,
    discretize,
    gdp_delta,
    identity_pld,
    make_weight,
    to_fourier,
)
from dpacct.pld import _halfswap, reset_transform_count, transform_count

SMALL = GridSpec(L=8.0, n=2**10)
MEDIUM = GridSpec(L=12.0, n=2**14)


def brute_force_circular_convolution(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """O(n^2) oracle for the engine's half-swapped circular convolution."""
    n = a.shape[0]
    sa, sb = np.roll(a, n // 2), np.roll(b, n // 2)
    out = np.zeros(n)
    for m in range(n):
        # c[m] = sum_j sa[j] * sb[(m - j) mod n]
        out[m] = float(np.dot(sa, sb[(m - np.arange(n)) % n]))
    return np.roll(out, n // 2)


class TestGridSpec:
    def test_rejects_non_power_of_two(self):
        with pytest.raises(ConfigError):
            GridSpec(L=1.0, n=1000)

    def test_rejects_bad_width(self):
        with pytest.raises(ConfigError):
            GridSpec(L=0.0, n=16)

    def test_points_layout(self):
        g = GridSpec(L=2.0, n=8)
        np.testing.assert_allclose(g.points(), -2.0 + 0.5 * np.arange(8))
        assert g.dx == 0.5


class TestDiscretize:
    def test_point_mass_gaussian(self):
        pld = discretize(GaussianPair(0.0, 1.0), SMALL, Rounding.UP)
        assert pld.mass[SMALL.n // 2] == 1.0
        assert pld.mass.sum() == 1.0
        assert pld.truncated_tail == 0.0

    def test_point_mass_subsampled(self):
        pld = discretize(SubsampledGaussianPair(0.0, 1.0), SMALL, Rounding.CENTER)
        assert pld.mass[SMALL.n // 2] == 1.0

    def test_moments_on_default_grid(self):
        pld = discretize(GaussianPair(1.0, 1.0), dpacct.DEFAULT_GRID, Rounding.CENTER)
        assert pld.mean() == pytest.approx(0.5, abs=1e-4)
        assert pld.variance() == pytest.approx(1.0, abs=1e-3)

    def test_grid_too_narrow(self):
        with pytest.raises(GridTooNarrow):
            discretize(GaussianPair(30.0, 1.0), GridSpec(L=20.0, n=2**12), Rounding.UP)

    def test_mass_balance(self):
        for rounding in (Rounding.UP, Rounding.DOWN, Rounding.CENTER):
            pld = discretize(GaussianPair(1.0, 1.0), MEDIUM, rounding)
            assert pld.mass.sum() + pld.truncated_tail == pytest.approx(1.0, abs=1e-9)

    def test_up_down_bracket_exact_curve(self):
        pair = GaussianPair(1.0, 1.0)
        up = discretize(pair, MEDIUM, Rounding.UP)
        down = discretize(pair, MEDIUM, Rounding.DOWN)
        for eps in np.linspace(0.0, MEDIUM.L / 2, 9):
            exact = gdp_delta(1.0, eps)
            assert delta_from_pld(down, eps) <= exact + 1e-15
            assert delta_from_pld(up, eps) >= exact - 1e-15

    def test_bracket_gap_shrinks_linearly(self):
        pair = GaussianPair(1.0, 1.0)
        gaps = []
        for n in (2**12, 2**13, 2**14):
            grid = GridSpec(L=12.0, n=n)
            up = delta_from_pld(discretize(pair, grid, Rounding.UP), 0.5)
            down = delta_from_pld(discretize(pair, grid, Rounding.DOWN), 0.5)
            gaps.append(up - down)
        assert gaps[0] / gaps[1] == pytest.approx(2.0, rel=0.1)
        assert gaps[1] / gaps[2] == pytest.approx(2.0, rel=0.1)


class TestComposeFft:
    def test_identity_composition(self):
        pld = discretize(GaussianPair(0.8, 1.0), SMALL, Rounding.CENTER)
        out = compose_fft([(pld, 1)])
        np.testing.assert_allclose(out.mass, pld.mass, atol=1e-12)

    def test_hundred_fold_moments(self):
        pld = discretize(GaussianPair(0.1, 1.0), dpacct.DEFAULT_GRID, Rounding.CENTER)
        out = compose_fft([(pld, 100)])
        assert out.mean() == pytest.approx(0.5, abs=1e-3)
        assert out.variance() == pytest.approx(1.0, abs=1e-3)

    def test_matches_brute_force_convolution(self):
        a = discretize(SubsampledGaussianPair(0.35, 1.2), SMALL, Rounding.UP)
        b = discretize(SubsampledGaussianPair(0.6, 0.9), SMALL, Rounding.UP)
        fast = compose_fft([(a, 2), (b, 3)])
        slow = a.mass
        for _ in range(1):
            slow = brute_force_circular_convolution(slow, a.mass)
        for _ in range(3):
            slow = brute_force_circular_convolution(slow, b.mass)
        assert np.max(np.abs(fast.mass - np.maximum(slow, 0.0))) <= 1e-10

    def test_mass_conservation(self):
        pld = discretize(GaussianPair(0.3, 1.0), MEDIUM, Rounding.CENTER)
        out = compose_fft([(pld, 7)])
        expected = (pld.mass.sum()) ** 7
        assert out.mass.sum() == pytest.approx(expected, abs=7e-9)

    def test_tail_union(self):
        pld = discretize(GaussianPair(1.0, 1.0), GridSpec(L=7.0, n=2**12), Rounding.UP)
        out = compose_fft([(pld, 3)])
        assert out.truncated_tail == pytest.approx(
            1.0 - (1.0 - pld.truncated_tail) ** 3, rel=1e-12
        )

    def test_grid_mismatch(self):
        a = discretize(GaussianPair(0.5, 1.0), SMALL, Rounding.UP)
        b = discretize(GaussianPair(0.5, 1.0), MEDIUM, Rounding.UP)
        with pytest.raises(GridMismatch):
            compose_fft([(a, 1), (b, 1)])

    def test_rounding_mismatch(self):
        a = discretize(GaussianPair(0.5, 1.0), SMALL, Rounding.UP)
        b = discretize(GaussianPair(0.5, 1.0), SMALL, Rounding.DOWN)
        with pytest.raises(RoundingMismatch):
            compose_fft([(a, 1), (b, 1)])

    def test_negative_multiplicity_rejected(self):
        a = discretize(GaussianPair(0.5, 1.0), SMALL, Rounding.UP)
        with pytest.raises(ConfigError):
            compose_fft([(a, -1)])


class TestDeltaFromPld:
    def test_point_mass_at_boundary(self):
        assert delta_from_pld(identity_pld(SMALL), 0.0) == 0.0

    def test_matches_analytic_gaussian(self):
        pld = discretize(GaussianPair(1.0, 1.0), dpacct.DEFAULT_GRID, Rounding.CENTER)
        assert delta_from_pld(pld, 1.0) == pytest.approx(gdp_delta(1.0, 1.0), abs=1e-6)

    def test_at_grid_edge_only_tail_remains(self):
        pld = discretize(GaussianPair(1.0, 1.0), GridSpec(L=7.0, n=2**12), Rounding.UP)
        assert delta_from_pld(pld, pld.grid.L) <= pld.truncated_tail + 1e-18

    def test_down_mode_drops_tail(self):
        pld = discretize(GaussianPair(1.0, 1.0), GridSpec(L=7.0, n=2**12), Rounding.DOWN)
        assert delta_from_pld(pld, pld.grid.L) == 0.0

    def test_vectorized_epsilon(self):
        pld = discretize(GaussianPair(1.0, 1.0), MEDIUM, Rounding.CENTER)
        eps = np.array([-1.0, 0.0, 0.7, 3.0])
        np.testing.assert_allclose(
            delta_from_pld(pld, eps), [delta_from_pld(pld, e) for e in eps], atol=0
        )


class TestWeightsAndPlancherel:
    def test_weight_zero_beyond_grid(self):
        w = make_weight(SMALL, SMALL.L)
        np.testing.assert_allclose(w.coefficients, 0.0, atol=0)

    def test_weight_saturates_low(self):
        # at eps = -L the hinge is ~1 on the upper half of the grid
        w = make_weight(SMALL, -SMALL.L)
        recovered = _halfswap(np.fft.ifft(w.coefficients).real)
        assert recovered[-1] == pytest.approx(1.0 - np.exp(-SMALL.L - (SMALL.L - SMALL.dx)), abs=1e-12)

    def test_inner_product_equals_direct_delta(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            mass = rng.random(SMALL.n)
            mass /= mass.sum()
            pld = dpacct.DiscretePLD(grid=SMALL, mass=mass, truncated_tail=0.0, rounding=Rounding.DOWN)
            eps = float(rng.uniform(-2.0, 6.0))
            w = make_weight(SMALL, eps)
            val = delta_plancherel([(to_fourier(pld), 1)], w)
            assert val == pytest.approx(delta_from_pld(pld, eps), abs=1e-12)

    def test_single_gaussian_identity(self):
        pld = discretize(GaussianPair(0.9, 1.0), MEDIUM, Rounding.CENTER)
        w = make_weight(MEDIUM, 0.8)
        assert delta_plancherel([(to_fourier(pld), 1)], w) == pytest.approx(
            delta_from_pld(compose_fft([(pld, 1)]), 0.8), abs=1e-10
        )

    def test_420_fold_two_paths(self):
        pld = discretize(GaussianPair(1.0, 100.0), dpacct.DEFAULT_GRID, Rounding.CENTER)
        fp = to_fourier(pld)
        w = make_weight(dpacct.DEFAULT_GRID, 1.0)
        direct = delta_from_pld(compose_fft([(pld, 420)]), 1.0)
        assert delta_plancherel([(fp, 420)], w) == pytest.approx(direct, abs=1e-9)

    def test_empty_product(self):
        pld = discretize(GaussianPair(0.9, 1.0), SMALL, Rounding.CENTER)
        fp = to_fourier(pld)
        for eps in (-0.5, 0.0, 0.5):
            w = make_weight(SMALL, eps)
            assert delta_plancherel([(fp, 0)], w) == pytest.approx(
                max(0.0, 1.0 - np.exp(eps)), abs=1e-12
            )

    def test_weight_grid_mismatch(self):
        pld = discretize(GaussianPair(0.9, 1.0), SMALL, Rounding.CENTER)
        w = make_weight(MEDIUM, 0.5)
        with pytest.raises(GridMismatch):
            delta_plancherel([(to_fourier(pld), 1)], w)

    def test_dc_coefficient_is_total_mass(self):
        pld = discretize(GaussianPair(0.9, 1.0), SMALL, Rounding.UP)
        fp = to_fourier(pld)
        assert fp.coefficients[0].real == pytest.approx(pld.mass.sum(), abs=1e-12)
        assert abs(fp.coefficients[0].imag) <= 1e-12


class TestSymmetry:
    def test_gaussian_hockey_stick_symmetric_across_orderings(self):
        # The two neighbour directions of the q=1 subsampled pair realise the
        # two orderings of the same Gaussian pair through different formulas;
        # their curves and the direct Gaussian-pair curve must coincide.
        grid = MEDIUM
        sigma = 1.3
        plds = [
            discretize(GaussianPair(1.0, sigma), grid, Rounding.CENTER),
            discretize(SubsampledGaussianPair(1.0, sigma, Direction.ADD), grid, Rounding.CENTER),
            discretize(SubsampledGaussianPair(1.0, sigma, Direction.REMOVE), grid, Rounding.CENTER),
        ]
        for eps in (0.0, 0.25, 1.0, 2.5):
            values = [delta_from_pld(p, eps) for p in plds]
            assert max(values) - min(values) <= 1e-10


class TestTransformCounter:
    def test_counts_forward_and_inverse(self):
        pld = discretize(GaussianPair(0.5, 1.0), SMALL, Rounding.CENTER)
        reset_transform_count()
        compose_fft([(pld, 2)])
        assert transform_count() == 2  # one forward, one inverse

    def test_plancherel_path_uses_no_transforms(self):
        pld = discretize(GaussianPair(0.5, 1.0), SMALL, Rounding.CENTER)
        fp = to_fourier(pld)
        w = make_weight(SMALL, 0.5)
        reset_transform_count()
        delta_plancherel([(fp, 5)], w)
        assert transform_count() == 0
