from __future__ import annotations

import io
import math

import numpy as np
import pytest
from scipy.stats import chisquare

from bookend.errors import ValidationError
from bookend.free_energy import MBAR_LADDER, LambdaSchedule, mbar_solve, parse_ukn_csv
from bookend.toy_ensemble import (
    Harmonic,
    MixedPotential,
    Quartic,
    Tabulated,
    generate_u_kn,
    harmonic_free_energy,
    metropolis_chain,
    mixed_potential,
    potential_from_dict,
    reduced_matrix,
    sample_windows,
    write_sample_archive,
)


def test_mixed_endpoints_and_midpoint():
    u0, u1 = Harmonic(1.0), Harmonic(3.0)
    assert mixed_potential(u0, u1, 0.0, 1.3)[0] == u0(1.3)
    assert mixed_potential(u0, u1, 1.0, 1.3)[0] == u1(1.3)
    energy, slope = mixed_potential(u0, u1, 0.5, 1.0)
    assert energy == pytest.approx(1.0)
    assert slope == pytest.approx(1.0)


def test_mixed_is_affine_in_lambda(rng):
    u0, u1 = Quartic(0.5, -1.0), Harmonic(2.0, 0.3)
    x = rng.normal(size=10)
    lams = np.linspace(0, 1, 7)
    energies = np.array([mixed_potential(u0, u1, l, x)[0] for l in lams])
    slopes = {tuple(mixed_potential(u0, u1, l, x)[1]) for l in lams}
    assert len(slopes) == 1
    assert np.allclose(np.diff(energies, 2, axis=0), 0.0, atol=1e-12)


def test_lambda_range_checked():
    with pytest.raises(ValidationError):
        mixed_potential(Harmonic(1), Harmonic(1), 1.2, 0.0)
    with pytest.raises(ValidationError):
        MixedPotential(Harmonic(1), Harmonic(1), -0.1)


def test_potential_validation():
    with pytest.raises(ValidationError):
        Harmonic(0.0)
    with pytest.raises(ValidationError):
        Quartic(-1.0, 0.0)
    with pytest.raises(ValidationError):
        Tabulated((0.0, 0.0), (1.0, 2.0))


def test_tabulated_interpolates_and_walls():
    t = Tabulated((0.0, 1.0, 2.0), (0.0, 2.0, 0.0))
    assert t(0.5) == 1.0
    assert t(-0.1) == math.inf
    assert t(np.array([1.5, 3.0])).tolist() == [1.0, math.inf]


def test_harmonic_chain_variance():
    n = 100_000
    chain = metropolis_chain(Harmonic(1.0), 1.0, n, seed=3, thin=5)
    # Var of the sample variance of a unit Gaussian is 2/n.
    assert abs(chain.samples.var() - 1.0) < 5 * math.sqrt(2.0 / n)
    assert abs(chain.acceptance_rate - 0.4) < 0.1


def test_flat_box_is_uniform():
    box = Tabulated((-1.0, 1.0), (0.0, 0.0))
    chain = metropolis_chain(box, 1.0, 20_000, seed=1, thin=10)
    hist, _ = np.histogram(chain.samples, bins=10, range=(-1, 1))
    assert chisquare(hist).pvalue > 1e-3


def test_two_bin_boltzmann_ratio():
    ramp = Tabulated((0.0, 2.0), (0.0, 2.0))
    chain = metropolis_chain(ramp, 1.0, 50_000, seed=2, x0=0.5, thin=5)
    low = np.count_nonzero(chain.samples < 1.0)
    high = len(chain.samples) - low
    expected = (1 - math.exp(-1)) / (math.exp(-1) - math.exp(-2))
    assert low / high == pytest.approx(expected, rel=0.05)


def test_chain_deterministic():
    a = metropolis_chain(Quartic(1.0, -2.0), 2.0, 500, seed=8)
    b = metropolis_chain(Quartic(1.0, -2.0), 2.0, 500, seed=8)
    assert np.array_equal(a.samples, b.samples)


def test_chain_argument_checks():
    with pytest.raises(ValidationError):
        metropolis_chain(Harmonic(1), 0.0, 10)
    with pytest.raises(ValidationError):
        metropolis_chain(Tabulated((0.0, 1.0), (0.0, 0.0)), 1.0, 10, x0=5.0)


def test_harmonic_free_energy_closed_forms():
    assert harmonic_free_energy(4.0, 1.0) - harmonic_free_energy(1.0, 1.0) == pytest.approx(math.log(2))
    assert harmonic_free_energy(2.0, 1.0) - harmonic_free_energy(2.0, 1.0) == 0.0
    # beta * A depends on beta * k only.
    assert 2.0 * harmonic_free_energy(1.5, 2.0) == pytest.approx(0.5 * harmonic_free_energy(6.0, 0.5))
    with pytest.raises(ValidationError):
        harmonic_free_energy(-1.0, 1.0)


def test_end_to_end_harmonic_mbar():
    data = generate_u_kn(MBAR_LADDER, Harmonic(1.0), Harmonic(4.0), 1.0, 5000, seed=4)
    assert data.n_states == 6 and data.counts.tolist() == [5000] * 6
    delta = mbar_solve(data).delta(0, 5)
    exact = harmonic_free_energy(4.0, 1.0) - harmonic_free_energy(1.0, 1.0)
    assert abs(delta - exact) < 0.05


def test_single_window_matrix():
    data = generate_u_kn(LambdaSchedule((0.3,)), Harmonic(1), Harmonic(2), 1.0, 100, seed=0)
    assert data.u.shape == (1, 100)
    assert mbar_solve(data).free_energies.tolist() == [0.0]


def test_window_seeds_independent_of_thread_count():
    args = (MBAR_LADDER, Harmonic(1), Harmonic(4), 1.0, 300, 5)
    one = sample_windows(*args, threads=1)
    many = sample_windows(*args, threads=4)
    for a, b in zip(one, many):
        assert np.array_equal(a.samples, b.samples)


def test_stride_thins_frames():
    full = generate_u_kn(MBAR_LADDER, Harmonic(1), Harmonic(4), 1.0, 100, seed=1)
    thin = generate_u_kn(MBAR_LADDER, Harmonic(1), Harmonic(4), 1.0, 100, seed=1, stride=10)
    assert thin.counts.tolist() == [10] * 6
    assert np.array_equal(thin.u[:, :10], full.u[:, :100:10])


def test_reduced_matrix_scales_with_beta():
    windows = [np.array([1.0, 2.0]), np.array([0.5])]
    schedule = LambdaSchedule((0.0, 1.0))
    data = reduced_matrix(schedule, Harmonic(1), Harmonic(3), 2.0, windows)
    assert data.u.tolist() == [[1.0, 4.0, 0.25], [3.0, 12.0, 0.75]]


def test_archive_is_readable_as_ukn():
    schedule = LambdaSchedule((0.0, 0.5, 1.0))
    windows = [c.samples for c in sample_windows(schedule, Harmonic(1), Harmonic(2), 1.0, 20, seed=2)]
    buf = io.StringIO()
    data = write_sample_archive(buf, schedule, Harmonic(1), Harmonic(2), 1.0, windows)
    assert buf.getvalue().splitlines()[0] == "state,sample,x,u_0,u_1,u_2"
    back = parse_ukn_csv(buf.getvalue())
    assert np.array_equal(back.u, data.u)


@pytest.mark.parametrize(
    "spec, value",
    [
        ({"kind": "harmonic", "k": 2.0}, 1.0),
        ({"kind": "quartic", "a": 1.0, "b": -1.0}, 0.0),
        ({"kind": "tabulated", "grid": [0, 2], "values": [0, 4]}, 2.0),
    ],
)
def test_potential_from_dict(spec, value):
    assert potential_from_dict(spec)(1.0) == pytest.approx(value)


def test_potential_from_dict_errors():
    with pytest.raises(ValidationError):
        potential_from_dict({"kind": "morse"})
    with pytest.raises(ValidationError):
        potential_from_dict({"kind": "harmonic"})
