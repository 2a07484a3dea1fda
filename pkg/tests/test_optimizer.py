import numpy as np
import pytest

import wavereg.similarity as sim
from wavereg.errors import ConfigurationError, DivergenceError, ShapeError
from wavereg.metrics import endpoint_error, neg_jac_fraction
from wavereg.optimizer import (
    AdamState,
    RegistrationConfig,
    adam_step,
    band_gains,
    integrate,
    register,
    step_sizes,
)
from wavereg.pyramid import init_pyramid, reconstruct_flow
from wavereg.synth import SynthSpec, interior_mask, invert_displacement, phantom, synth_pair
from wavereg.wavelet import filter_bank

# ---------------------------------------------------------------------------
# Adam


def test_zero_gradient_leaves_params():
    x = np.array([1.0, -2.0, 3.0])
    st = AdamState.zeros_like(x, lr=0.1)
    np.testing.assert_array_equal(adam_step(x, np.zeros(3), st), x)
    assert st.t == 1


def test_first_step_is_lr_times_sign():
    x = np.zeros(4)
    g = np.array([3.0, -0.01, 1e4, -7.0])
    st = AdamState.zeros_like(x, lr=0.05)
    step = adam_step(x, g, st) - x
    np.testing.assert_allclose(step, -0.05 * np.sign(g), rtol=1e-5)


def test_per_entry_learning_rates():
    st = AdamState.zeros_like(np.zeros(2), lr=np.array([0.1, 0.001]))
    step = adam_step(np.zeros(2), np.ones(2), st)
    np.testing.assert_allclose(step, [-0.1, -0.001], rtol=1e-6)


def test_quadratic_converges():
    x = np.array([5.0])
    st = AdamState.zeros_like(x, lr=0.1)
    for i in range(300):
        x = adam_step(x, 2 * x, st)
        if abs(x[0]) < 0.5:
            break
    assert abs(x[0]) < 0.5


def test_adam_matches_reference_recurrence(rng):
    x = rng.standard_normal(5)
    st = AdamState.zeros_like(x, lr=0.01)
    m = v = np.zeros(5)
    ref = x.copy()
    for t in range(1, 6):
        g = rng.standard_normal(5)
        x = adam_step(x, g, st)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(x, ref, rtol=1e-12)


def test_adam_shape_mismatch():
    with pytest.raises(ShapeError):
        adam_step(np.zeros(3), np.zeros(4), AdamState.zeros_like(np.zeros(3), lr=0.1))


# ---------------------------------------------------------------------------
# config


@pytest.mark.parametrize("kw", [dict(stage_iterations=(1, 2)), dict(stage_iterations=(1, -1, 1)),
                                dict(lr=0.0), dict(gate_lr=-1.0), dict(sq_steps=-2), dict(wavelet="sym4")])
def test_bad_registration_config(kw):
    with pytest.raises(ConfigurationError):
        RegistrationConfig(**kw)


@pytest.mark.parametrize("wavelet", ["haar", "db2"])
def test_step_sizes_bound_the_displacement_change(rng, wavelet):
    # a full-size step on every entry of one band moves the field by at most lr * (band overlap)
    cfg = RegistrationConfig(lr=0.1, wavelet=wavelet)
    p = init_pyramid((16, 16, 16))
    lrs = step_sizes(p, cfg)
    gains = band_gains((16, 16, 16), wavelet)
    # haar lll at the coarsest level: one synthesis gain of 2*sqrt(2) per level
    if wavelet == "haar":
        assert gains["phi1", "lll"] == pytest.approx(2 ** -4.5)
    for level in ("phi1", "res2", "res3"):
        for band, arr in getattr(lrs, level).items():
            q = init_pyramid((16, 16, 16))
            getattr(q, level)[band][0, 1, 1, 1] = arr[0, 1, 1, 1]
            assert np.abs(reconstruct_flow(q, filter_bank(wavelet))).max() <= 0.1 * (1 + 1e-9)
    np.testing.assert_array_equal(lrs.gates2, cfg.gate_lr)


# ---------------------------------------------------------------------------
# register


def small_pair(seed=0, kind="gaussian_bumps", dims=(24, 24, 24), disp=2.0):
    return synth_pair(SynthSpec(kind, dims, disp, seed))


def test_register_shape_errors():
    with pytest.raises(ShapeError):
        register(np.zeros((16, 16, 16)), np.zeros((16, 16, 8)))
    with pytest.raises(ShapeError):
        register(np.zeros((12, 16, 16)), np.zeros((12, 16, 16)))


def test_identical_images_stay_at_zero():
    img = phantom((32, 32, 32), np.random.default_rng(3))
    res = register(img, img, RegistrationConfig(stage_iterations=(50, 50, 50)))
    mag = np.sqrt((res.flow ** 2).sum(0))
    assert mag.mean() < 0.05
    zero_loss = sim.evaluate_loss(img, img, np.zeros_like(res.flow), RegistrationConfig().loss).value
    assert abs(res.diagnostics["loss"] - zero_loss) < 1e-3


@pytest.mark.slow
def test_translation_is_recovered():
    pair = synth_pair(SynthSpec("translation", (48, 48, 48), 3.0, seed=11))
    res = register(pair.moving, pair.fixed)
    ref = invert_displacement(pair.gt_flow)
    assert endpoint_error(res.flow, ref, interior_mask(pair.fixed.shape)) < 0.5


def test_result_contract():
    pair = small_pair()
    cfg = RegistrationConfig(stage_iterations=(6, 5, 4))
    res = register(pair.moving, pair.fixed, cfg)
    assert len(res.loss_history) == 15
    assert res.stage_bounds == [0, 6, 11]
    np.testing.assert_array_equal(res.flow, reconstruct_flow(res.pyramid, filter_bank("haar")))
    assert set(res.diagnostics) == {"loss", "similarity", "smoothness", "neg_jacobian_percent"}


def test_diffeomorphic_result_is_exp_of_field():
    pair = small_pair()
    cfg = RegistrationConfig(diffeomorphic=True, stage_iterations=(5, 5, 5))
    res = register(pair.moving, pair.fixed, cfg)
    np.testing.assert_array_equal(res.field, reconstruct_flow(res.pyramid, filter_bank("haar")))
    np.testing.assert_array_equal(res.flow, integrate(res.field, cfg))


def test_stage_one_freezes_finer_levels():
    pair = small_pair()
    res = register(pair.moving, pair.fixed, RegistrationConfig(stage_iterations=(10, 0, 0)))
    p = res.pyramid
    assert all(not v.any() for v in p.res2.values())
    assert all(not v.any() for v in p.res3.values())
    assert np.array_equal(p.gates2, np.ones((7, 2))) and np.array_equal(p.gates3, np.ones((7, 2)))
    assert any(v.any() for v in p.phi1.values())


def test_stage_monotonicity_and_entry_loss():
    pair = small_pair(seed=4)
    res = register(pair.moving, pair.fixed, RegistrationConfig(stage_iterations=(20, 20, 20)))
    best = res.stage_best
    assert best[1] <= best[0] + 1e-6 and best[2] <= best[1] + 1e-6
    # new levels enter at zero, so each stage starts from the previous stage's best
    for k in (1, 2):
        assert res.loss_history[res.stage_bounds[k]] == pytest.approx(best[k - 1], abs=1e-12)


def test_joint_schedule():
    pair = small_pair()
    # every level moves from the first step, so the early iterations overshoot before settling
    res = register(pair.moving, pair.fixed, RegistrationConfig(stage_iterations=(0, 0, 40)))
    assert len(res.loss_history) == 40 and res.stage_bounds == [0, 0, 0]
    assert res.diagnostics["loss"] < res.loss_history[0]
    assert any(v.any() for v in res.pyramid.res3.values())


def test_determinism():
    pair = small_pair(seed=2)
    cfg = RegistrationConfig(stage_iterations=(8, 8, 8), diffeomorphic=True)
    a = register(pair.moving, pair.fixed, cfg)
    b = register(pair.moving, pair.fixed, cfg)
    assert a.loss_history == b.loss_history
    assert np.array_equal(a.flow, b.flow)


@pytest.mark.slow
def test_diffeomorphic_registration_has_no_folding():
    pair = synth_pair(SynthSpec("gaussian_bumps", (32, 32, 32), 5.0, seed=5))
    res = register(pair.moving, pair.fixed, RegistrationConfig(diffeomorphic=True, stage_iterations=(40, 40, 40)))
    assert neg_jac_fraction(res.flow) == 0.0


def test_regularizer_sees_velocity_during_registration(monkeypatch):
    seen = []
    real = sim.smoothness
    monkeypatch.setattr(sim, "smoothness", lambda f: (seen.append(f.copy()), real(f))[1])
    pair = small_pair()
    res = register(pair.moving, pair.fixed, RegistrationConfig(diffeomorphic=True, stage_iterations=(15, 0, 0)))
    assert res.field.any()
    # last evaluation reconstructs the returned field
    assert np.array_equal(seen[-1], res.field)
    assert not np.array_equal(res.field, res.flow)


def test_divergence_is_reported(monkeypatch):
    real = sim.similarity_loss

    def exploding(warped, fixed, config):
        v, g = real(warped, fixed, config)
        exploding.calls += 1
        return (np.nan if exploding.calls == 4 else v), g

    exploding.calls = 0
    monkeypatch.setattr(sim, "similarity_loss", exploding)
    pair = small_pair()
    with pytest.raises(DivergenceError) as info:
        register(pair.moving, pair.fixed, RegistrationConfig(stage_iterations=(10, 0, 0)))
    assert info.value.iteration == 3


def test_rejects_non_finite_images():
    img = np.zeros((16, 16, 16))
    img[3, 3, 3] = np.inf
    with pytest.raises(ValueError):
        register(img, np.zeros((16, 16, 16)))
