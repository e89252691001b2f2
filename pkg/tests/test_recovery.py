import numpy as np
import pytest

from latfold import (A2, B2R2Options, ConfigurationError, E8, ZN, FoldedRecord,
                     SignalConfig, b2r2_recover, build_oob_operator,
                     check_recovery, fold_signal, hod_recover,
                     lasso_b2r2_recover, make_lattice, make_test_signal)
from latfold.experiments import draw_margin_trial
from latfold.recovery import b2r2_objective_history


def _start_in_cell(cfg, lattice, max_tries=400):
    seed = cfg.seed
    for _ in range(max_tries):
        c = SignalConfig(**{**cfg.__dict__, "seed": seed})
        handle, sampled = make_test_signal(c, lattice.lam)
        rec, p = fold_signal(sampled.samples[:3], lattice)
        if np.all(p == 0):
            return handle, sampled
        seed += 7919
    raise RuntimeError("no start-in-cell draw")


# --------------------------------------------------------------- oob operator

def test_oob_bin_selection():
    oob = build_oob_operator(120, 10.0, 120.0, guard=0.1)
    assert oob.selected_bins.min() == 12
    assert oob.selected_bins.max() == 108
    assert len(oob.selected_bins) == 97


def test_oob_empty_selection_raises():
    with pytest.raises(ConfigurationError):
        build_oob_operator(24, 10.0, 22.0, guard=0.1)


def test_oob_clean_signal_energy():
    cfg = SignalConfig(n_channels=2, omega_max=10.0, of=6.0, seed=0)
    _, sampled = make_test_signal(cfg, lam=1.0)
    oob = build_oob_operator(120, 10.0, 120.0, guard=0.1)
    assert oob.energy_fraction(sampled.samples) <= 1e-8


def test_oob_adjoint_consistency():
    oob = build_oob_operator(60, 10.0, 60.0, guard=0.1)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((60, 2))
    z = rng.standard_normal((len(oob.selected_bins), 2)) \
        + 1j * rng.standard_normal((len(oob.selected_bins), 2))
    lhs = np.vdot(oob.apply(x), z)
    rhs = np.vdot(x.astype(complex), oob.adjoint(z))
    assert lhs == pytest.approx(rhs, rel=1e-10)


# ----------------------------------------------------------------------- hod

def test_hod_no_folds_identity():
    lat = make_lattice(ZN, 2, 10.0)        # huge cell: nothing folds
    cfg = SignalConfig(n_channels=2, dr_factor=0.5, of=8.0, seed=1)
    _, sampled = make_test_signal(cfg, lat.lam)
    rec, p_true = fold_signal(sampled.samples, lat)
    assert np.all(p_true == 0)
    for order in (1, 2, 3):
        out = hod_recover(rec, lat, order)
        assert np.allclose(out.p_hat, 0.0)
        assert np.allclose(out.f_hat, sampled.samples)


def test_hod_1d_sine_exact():
    lat = make_lattice(ZN, 1, 1.0)
    fs, K = 200.0, 200                      # oversampling 10 at 10 Hz band
    t = np.arange(K) / fs
    f = (3.0 * np.sin(2 * np.pi * 3.0 * t))[:, None]   # starts inside the cell
    rec, p_true = fold_signal(f, lat)
    assert np.all(p_true[:2] == 0)
    out = hod_recover(rec, lat, 2)
    chk = check_recovery(out.p_hat, p_true, lat)
    assert chk.full_success


def test_hod_demo_1d_rate_one():
    lat = make_lattice(ZN, 1, 1.0)
    cfg0 = SignalConfig(n_channels=1, n_components=14, omega_max=10.0, of=8.0,
                        dr_factor=3.0, seed=0)
    for seed in range(10):
        cfg = SignalConfig(**{**cfg0.__dict__, "seed": seed})
        _, sampled = _start_in_cell(cfg, lat)
        rec, p_true = fold_signal(sampled.samples, lat)
        out = hod_recover(rec, lat, 2)
        assert check_recovery(out.p_hat, p_true, lat).full_success


def test_hod_2d_hexagon():
    lat = make_lattice(A2, 2, 1.0)
    cfg = SignalConfig(n_channels=2, complex_pair=True, of=8.0, dr_factor=3.0,
                       seed=4)
    _, sampled = _start_in_cell(cfg, lat)
    rec, p_true = fold_signal(sampled.samples, lat)
    out = hod_recover(rec, lat, 2)
    assert check_recovery(out.p_hat, p_true, lat).full_success


def test_hod_fails_under_noise_in_8d_study():
    # the premise |Delta^N f| < d_min/2 breaks at this dynamic range
    from latfold.channels import add_noise
    lat = make_lattice(E8, 8, 0.1)
    cfg = SignalConfig(n_channels=8, of=6.0, dr_factor=10.0, seed=5)
    _, sampled = make_test_signal(cfg, lat.lam)
    rec, p_true = fold_signal(sampled.samples, lat)
    noisy = add_noise(rec, 30.0, seed=6)
    out = hod_recover(noisy, lat, 2)
    assert not check_recovery(out.p_hat, p_true, lat).full_success


def test_hod_short_record_rejected():
    lat = make_lattice(ZN, 1, 1.0)
    rec = FoldedRecord(samples=np.zeros((2, 1)), lattice=lat)
    with pytest.raises(ConfigurationError):
        hod_recover(rec, lat, 2)


# ---------------------------------------------------------------------- b2r2

def test_b2r2_zero_folds_returns_zero():
    lat = make_lattice(ZN, 2, 10.0)
    cfg = SignalConfig(n_channels=2, dr_factor=0.5, of=6.0, seed=2)
    _, sampled = make_test_signal(cfg, lat.lam)
    rec, p_true = fold_signal(sampled.samples, lat)
    oob = build_oob_operator(120, 10.0, 120.0, guard=0.1)
    out = b2r2_recover(rec, lat, oob)
    assert np.allclose(out.p_hat, 0.0)
    assert out.converged


def test_b2r2_noiseless_margin_exact():
    lam = 0.1
    for fam in (ZN, E8):
        lat = make_lattice(fam, 8, lam)
        of, K, m_max = 6, 240, 19
        margin = K - 28
        seed = np.random.SeedSequence([1, 2, 3])
        f = draw_margin_trial(seed, lat, 8, K, m_max, margin, 10.0, 0.06)
        rec, p_true = fold_signal(f, lat)
        oob = build_oob_operator(K, 9.5, 120.0, guard=0.04)
        out = b2r2_recover(rec, lat, oob, B2R2Options(support_margin=margin,
                                                      bound=1.0 + lat.d_min))
        assert check_recovery(out.p_hat, p_true, lat).full_success
        assert np.allclose(out.f_hat, f, atol=1e-8)


def test_b2r2_gd_objective_monotone():
    lat = make_lattice(ZN, 2, 1.0)
    cfg = SignalConfig(n_channels=2, dr_factor=3.0, of=6.0, seed=3)
    _, sampled = make_test_signal(cfg, lat.lam)
    rec, _ = fold_signal(sampled.samples, lat)
    oob = build_oob_operator(120, 10.0, 120.0, guard=0.1)
    hist = b2r2_objective_history(rec, lat, oob,
                                  B2R2Options(method="gd", max_iters=300))
    diffs = np.diff(np.array(hist))
    assert np.all(diffs <= 1e-12)


def test_b2r2_gd_matches_lstsq_on_easy_case():
    # short active window over a well-oversampled record: the restricted
    # least squares is well conditioned and plain gradient descent reaches
    # the same minimizer as the direct solve
    lam = 0.5
    lat = make_lattice(ZN, 2, lam)
    K, m_max, margin = 80, 9, 80 - 8
    seed = np.random.SeedSequence([9, 9])
    f = draw_margin_trial(seed, lat, 2, K, m_max, margin, 4.0, 0.25)
    rec, p_true = fold_signal(f, lat)
    oob = build_oob_operator(K, 9.0, 80.0, guard=0.04)
    a = b2r2_recover(rec, lat, oob, B2R2Options(support_margin=margin))
    b = b2r2_recover(rec, lat, oob, B2R2Options(support_margin=margin,
                                                method="gd", max_iters=30000,
                                                tol=1e-15))
    assert check_recovery(a.p_hat, p_true, lat).full_success
    assert np.array_equal(a.p_hat, b.p_hat)


def test_b2r2_unfold_identity():
    lam = 0.1
    lat = make_lattice(E8, 8, lam)
    K, m_max, margin = 240, 19, 240 - 28
    f = draw_margin_trial(np.random.SeedSequence(5), lat, 8, K, m_max, margin,
                          10.0, 0.06)
    rec, _ = fold_signal(f, lat)
    oob = build_oob_operator(K, 9.5, 120.0, guard=0.04)
    out = b2r2_recover(rec, lat, oob, B2R2Options(support_margin=margin))
    assert np.allclose(out.f_hat - rec.samples, out.p_hat, atol=1e-12)
    from latfold import is_lattice_point
    assert is_lattice_point(lat, out.p_hat)


def test_b2r2_equivariance_to_lattice_shift():
    # shifting the unfolded signal by a lattice point leaves y, hence p_hat,
    # unchanged row-to-row (the shift is invisible after folding)
    lam = 0.1
    lat = make_lattice(ZN, 8, lam)
    K, m_max, margin = 240, 19, 240 - 28
    f = draw_margin_trial(np.random.SeedSequence(6), lat, 8, K, m_max, margin,
                          10.0, 0.06)
    shift = lat.basis @ np.array([1.0, -2, 0, 3, 0, 0, 1, 0])
    rec1, _ = fold_signal(f, lat)
    rec2, _ = fold_signal(f + shift, lat)
    assert np.allclose(rec1.samples, rec2.samples, atol=1e-9)


# --------------------------------------------------------------------- lasso

def _two_lobe_sine(K=120, fs=120.0):
    t = np.arange(K) / fs
    return (1.05 * np.sin(2 * np.pi * t) + 0.35 * np.sin(4 * np.pi * t))[:, None]


def test_lasso_zero_fold_returns_zero():
    lat = make_lattice(ZN, 1, 1.0)
    f = 0.4 * _two_lobe_sine()
    rec, _ = fold_signal(f, lat)
    oob = build_oob_operator(120, 9.5, 120.0, guard=0.05)
    out = lasso_b2r2_recover(rec, lat, oob)
    assert np.allclose(out.p_hat, 0.0)


def test_lasso_sine_fold_events_exact():
    lat = make_lattice(ZN, 1, 1.0)
    f = _two_lobe_sine()
    rec, p_true = fold_signal(f, lat)
    n_events = int((np.abs(np.diff(p_true, axis=0)).sum(axis=1) > 0).sum())
    assert n_events > 0
    oob = build_oob_operator(120, 9.5, 120.0, guard=0.05)
    out = lasso_b2r2_recover(rec, lat, oob)
    assert check_recovery(out.p_hat, p_true, lat).full_success
    got_events = int((np.abs(np.diff(out.p_hat, axis=0)).sum(axis=1) > 0).sum())
    assert got_events == n_events


def test_lasso_mu_zero_matches_b2r2_objective_and_folds():
    # at mu = 0 the two objectives coincide up to the cumulative-sum
    # reparameterization; on noiseless records solved by both, the
    # recovered folds agree
    lat = make_lattice(ZN, 1, 1.0)
    oob = build_oob_operator(120, 9.5, 120.0, guard=0.05)
    rng = np.random.default_rng(0)
    v = rng.standard_normal((120, 1))
    p = np.cumsum(v, axis=0)
    y = rng.standard_normal((120, 1))
    Fy = oob.apply(y)
    obj_p = float((np.abs(oob.apply(p) + Fy) ** 2).sum())
    obj_v = float((np.abs(oob.apply(np.cumsum(v, axis=0)) + Fy) ** 2).sum())
    assert obj_p == pytest.approx(obj_v, rel=1e-12)

    f = 0.4 * _two_lobe_sine()            # clean, zero folds
    rec, p_true = fold_signal(f, lat)
    a = b2r2_recover(rec, lat, oob)
    b = lasso_b2r2_recover(rec, lat, oob, mu=0.0)
    assert np.array_equal(a.p_hat, b.p_hat)
    assert np.array_equal(a.p_hat, p_true)


def test_lasso_negative_mu_rejected():
    lat = make_lattice(ZN, 1, 1.0)
    rec, _ = fold_signal(_two_lobe_sine(), lat)
    oob = build_oob_operator(120, 9.5, 120.0, guard=0.05)
    with pytest.raises(ConfigurationError):
        lasso_b2r2_recover(rec, lat, oob, mu=-1.0)


# ------------------------------------------------------------ check_recovery

def test_check_recovery_identical():
    lat = make_lattice(ZN, 2, 1.0)
    p = 2.0 * np.array([[1.0, 0], [0, -1], [2, 2]])
    chk = check_recovery(p, p, lat)
    assert chk.full_success and chk.sample_error_count == 0


def test_check_recovery_one_bad_row():
    lat = make_lattice(ZN, 2, 1.0)
    p = 2.0 * np.array([[1.0, 0], [0, -1], [2, 2]])
    q = p.copy()
    q[1] += 2.0
    chk = check_recovery(q, p, lat)
    assert not chk.full_success
    assert chk.sample_error_count == 1


def test_check_recovery_shape_mismatch():
    lat = make_lattice(ZN, 2, 1.0)
    with pytest.raises(ConfigurationError):
        check_recovery(np.zeros((3, 2)), np.zeros((4, 2)), lat)


def test_success_residual_equals_channel_distortion():
    # whenever unfolding succeeds the reconstruction error is exactly the
    # channel error on the folded samples
    from latfold.channels import add_noise
    lam = 0.1
    lat = make_lattice(E8, 8, lam)
    K, m_max, margin = 240, 19, 240 - 28
    f = draw_margin_trial(np.random.SeedSequence(8), lat, 8, K, m_max, margin,
                          10.0, 0.06)
    rec, p_true = fold_signal(f, lat)
    noisy = add_noise(rec, 30.0, seed=9)
    oob = build_oob_operator(K, 9.5, 120.0, guard=0.04)
    out = b2r2_recover(noisy, lat, oob, B2R2Options(support_margin=margin))
    chk = check_recovery(out.p_hat, p_true, lat, f_hat=out.f_hat, f_true=f)
    assert chk.full_success
    channel_mse = ((noisy.samples - rec.samples) ** 2).sum() / rec.samples.size
    assert chk.residual_mse == pytest.approx(channel_mse, rel=1e-12)
