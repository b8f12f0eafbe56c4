import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from hetho.analytic import total_handover_rate, tier_association_probability
from hetho.model import (
    KM2,
    ConfigError,
    NetworkConfig,
    PropagationConstants,
    SpeedModel,
    TierParams,
    UserDensityModel,
    beta_factor,
    macro_pico_config,
    range_ratio,
    validate_config,
    validate_speed,
    validate_users,
)


def test_operating_point_accepted(cfg5):
    out = validate_config(cfg5)
    assert out == cfg5
    assert out.users_in_region == pytest.approx(100.0)


@pytest.mark.parametrize("alpha", [2.0, 1.5, -3.0, math.nan, math.inf])
def test_rejects_small_exponent(cfg5, alpha):
    with pytest.raises(ConfigError, match="pathloss exponent must exceed 2"):
        validate_config(cfg5.with_tier(1, pathloss_exponent=alpha))


@pytest.mark.parametrize("bias", [0.0, -1.0, math.nan])
def test_rejects_nonpositive_bias(cfg5, bias):
    with pytest.raises(ConfigError, match="bias must be positive"):
        validate_config(cfg5.with_tier(0, bias=bias))


@pytest.mark.parametrize("field", ["density", "power"])
@pytest.mark.parametrize("value", [0.0, -1e-6, math.inf])
def test_rejects_nonpositive_density_power(cfg5, field, value):
    with pytest.raises(ConfigError):
        validate_config(cfg5.with_tier(0, **{field: value}))


def test_rejects_empty_and_bad_users(cfg5):
    with pytest.raises(ConfigError, match="at least one tier"):
        validate_config(NetworkConfig(()))
    from dataclasses import replace

    with pytest.raises(ConfigError):
        validate_config(replace(cfg5, user_density=-1.0))
    with pytest.raises(ConfigError):
        validate_config(replace(cfg5, region_area=0.0))


def test_beta_factor_examples(cfg5):
    assert beta_factor(cfg5, 0, 0) == 1.0
    assert beta_factor(cfg5, 1, 1) == 1.0
    expected = float(mpmath.mpf("0.2") ** (mpmath.mpf(1) / mpmath.mpf("3.5")))
    assert beta_factor(cfg5, 0, 1) == pytest.approx(expected, rel=1e-15)
    # the often-quoted 0.63144 is off in the fifth digit; the exact value is 0.6313850...
    assert beta_factor(cfg5, 0, 1) == pytest.approx(0.63144, abs=1e-4)
    same = cfg5.with_tier(1, power=1.0)
    assert beta_factor(same, 0, 1) == 1.0


def test_beta_factor_needs_equal_exponents(cfg5):
    with pytest.raises(ConfigError):
        beta_factor(cfg5.with_tier(1, pathloss_exponent=4.0), 0, 1)


@given(c=st.floats(1e-3, 1e3), which=st.sampled_from(["power", "bias"]))
def test_common_power_scaling_invariance(c, which):
    base = macro_pico_config(alpha2=4.0)
    scaled = base
    for i in range(base.n_tiers):
        scaled = scaled.with_tier(i, **{which: getattr(base.tiers[i], which) * c})
    for m in range(2):
        for n in range(2):
            assert range_ratio(scaled, m, n) == pytest.approx(range_ratio(base, m, n), rel=1e-14)
    sp = SpeedModel.uniform(5.0)
    a = total_handover_rate(base, sp).pairwise
    b = total_handover_rate(scaled, sp).pairwise
    np.testing.assert_allclose(b, a, rtol=1e-12)
    assert tier_association_probability(scaled, 0) == pytest.approx(tier_association_probability(base, 0), rel=1e-12)


@given(L0=st.floats(1e-8, 1e3))
def test_reference_loss_cancels_exactly(L0):
    base = macro_pico_config(alpha2=4.0)
    from dataclasses import replace

    other = replace(base, propagation=PropagationConstants(reference_loss=L0))
    sp = SpeedModel.uniform(5.0)
    assert np.array_equal(total_handover_rate(base, sp).pairwise, total_handover_rate(other, sp).pairwise)


@given(r0=st.floats(0.1, 10.0))
def test_reference_distance_cancels_for_equal_exponents(r0):
    from dataclasses import replace

    base = macro_pico_config()
    other = replace(base, propagation=PropagationConstants(reference_distance=r0))
    sp = SpeedModel.uniform(5.0)
    np.testing.assert_allclose(
        total_handover_rate(other, sp).pairwise, total_handover_rate(base, sp).pairwise, rtol=1e-12
    )


def test_reference_distance_matters_for_unequal_exponents():
    # (R / r0)^-alpha leaves a factor r0^(alpha_n - alpha_m) in the tier comparison
    from dataclasses import replace

    base = macro_pico_config(alpha2=4.0)
    other = replace(base, propagation=PropagationConstants(reference_distance=10.0))
    ratio = range_ratio(other, 0, 1) / range_ratio(base, 0, 1)
    assert ratio == pytest.approx(10.0 ** (1.0 - 3.5 / 4.0), rel=1e-14)


def test_wavelength_is_informational(cfg5):
    from dataclasses import replace

    other = validate_config(replace(cfg5, propagation=PropagationConstants(wavelength=0.15)))
    sp = SpeedModel.uniform(5.0)
    assert np.array_equal(total_handover_rate(other, sp).pairwise, total_handover_rate(cfg5, sp).pairwise)
    with pytest.raises(ConfigError):
        validate_config(replace(cfg5, propagation=PropagationConstants(wavelength=-1.0)))


def test_speed_models():
    rng = np.random.default_rng(0)
    u = SpeedModel.uniform(5.0)
    assert u.mean == 5.0
    s = u.sample(rng, 200_000)
    assert s.min() >= 0 and s.max() <= 10.0
    assert abs(s.mean() - 5.0) < 4 * 10 / math.sqrt(12) / math.sqrt(s.size)
    c = SpeedModel.constant(3.0)
    assert np.all(c.sample(rng, 10) == 3.0)
    t = SpeedModel.table([1.0, 3.0], [0.25, 0.75])
    assert t.mean == pytest.approx(2.5)
    draws = t.sample(rng, 100_000)
    assert set(np.unique(draws)) == {1.0, 3.0}
    assert np.mean(draws == 3.0) == pytest.approx(0.75, abs=0.01)
    assert u.scaled(2.0).mean == 10.0
    assert t.scaled(2.0).values == (2.0, 6.0)


def test_speed_validation():
    validate_speed(SpeedModel.uniform(0.0))
    with pytest.raises(ConfigError):
        validate_speed(SpeedModel("weird", 1.0))
    with pytest.raises(ConfigError):
        validate_speed(SpeedModel.uniform(-1.0))
    with pytest.raises(ConfigError):
        validate_speed(SpeedModel.table([1.0, -2.0], [0.5, 0.5]))
    with pytest.raises(ConfigError):
        validate_speed(SpeedModel("table", 1.0, (1.0,), (0.5, 0.5)))
    with pytest.raises(ConfigError):
        validate_speed(SpeedModel("uniform", 1.0, per_tier=(SpeedModel.uniform(1.0),)), n_tiers=2)


def test_user_density_models():
    assert UserDensityModel.uniform(1e-4).for_tier(1) == 1e-4
    tiered = UserDensityModel.tiered([1e-4, 2e-4])
    assert tiered.for_tier(1) == 2e-4
    with pytest.raises(ConfigError):
        validate_users(UserDensityModel.tiered([1e-4, -1.0]))
    with pytest.raises(ConfigError):
        validate_users(tiered, n_tiers=3)


def test_link_weight_units():
    cfg = NetworkConfig((TierParams(1 / KM2, 2.0, 3.0, 1.5),), PropagationConstants(reference_distance=2.0))
    assert cfg.link_weight(0) == pytest.approx(3.0 * 8.0)
    assert macro_pico_config().link_weight(1) == 0.2
