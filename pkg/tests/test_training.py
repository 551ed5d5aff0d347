import json
import math

import numpy as np
import pytest

from rhsbeam.beamformer import training_error
from rhsbeam.model import ArrayModel, PsiMuPosition, SystemConfig, User, channel, rayleigh_distance
from rhsbeam.optimizer import Codeword
from rhsbeam.training import (MeasurementModel, BaselineConfig, estimate_mu,
                              estimate_psi, feedback_to_index, measure_power,
                              overhead, run_dft_distance, run_exhaustive,
                              run_far_field, run_two_phase, run_two_stage)


def _plant(grid, cells):
    return [User(id=k, position=PsiMuPosition(grid.psi_center(i), grid.mu_center(j)))
            for k, (i, j) in enumerate(cells)]


# ------------------------------------------------------------- measure_power

def test_measure_power_zero_pattern_zero_noise(tiny_array):
    user = User(id=0, position=PsiMuPosition(0.1, 0.05))
    cw = Codeword(np.zeros(tiny_array.config.n_elements), binary=True)
    mm = MeasurementModel(k_users=2, noise_variance=0.0)
    assert measure_power(user, cw, tiny_array, mm) == 0.0


def test_measure_power_matches_matrix_evaluation(tiny_array, rng):
    # independent oracle: h . diag(m) . F . v with explicit matrices
    cfg = tiny_array.config
    user = User(id=0, position=PsiMuPosition(-0.3, 0.12))
    m = rng.uniform(0, 1, size=cfg.n_elements)
    cw = Codeword(m)
    mm = MeasurementModel(k_users=3, noise_variance=0.0)
    got = measure_power(user, cw, tiny_array, mm)

    h = channel(user, tiny_array)
    v = np.full(cfg.n_feeds, math.sqrt(cfg.power / (cfg.n_feeds * 3)), dtype=complex)
    amp = h @ np.diag(m) @ tiny_array.feed_response @ v
    assert got == pytest.approx(abs(amp) ** 2, rel=1e-12)


def test_measure_power_deterministic_given_rng(tiny_array):
    user = User(id=0, position=PsiMuPosition(0.2, 0.08))
    cw = Codeword(np.ones(tiny_array.config.n_elements))
    mm = MeasurementModel(k_users=1, noise_variance=0.5)
    p1 = measure_power(user, cw, tiny_array, mm, rng=np.random.default_rng(9))
    p2 = measure_power(user, cw, tiny_array, mm, rng=np.random.default_rng(9))
    assert p1 == p2
    with pytest.raises(ValueError):
        measure_power(user, cw, tiny_array, mm)  # rng required when noisy


def test_noise_block_keying():
    mm = MeasurementModel(k_users=2, noise_variance=0.1, master_seed=3, trial_index=7)
    a = mm.noise_block(0, 16)
    b = mm.noise_block(0, 16)
    c = mm.noise_block(1, 16)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    quiet = MeasurementModel(k_users=2, noise_variance=0.0)
    assert np.all(quiet.noise_block(0, 8) == 0)


def test_measurement_model_validation():
    with pytest.raises(ValueError):
        MeasurementModel(k_users=0)
    with pytest.raises(ValueError):
        MeasurementModel(k_users=1, noise_variance=-1.0)
    with pytest.raises(ValueError):
        MeasurementModel(k_users=1, pilot_symbol=2.0 + 0j)
    with pytest.raises(ValueError):
        BaselineConfig(scheme="nope")


def test_digital_weight_power_split(tiny_array):
    mm = MeasurementModel(k_users=4, noise_variance=0.0)
    v = mm.digital_weight(tiny_array)
    assert np.sum(np.abs(v) ** 2) == pytest.approx(tiny_array.config.power / 4, rel=1e-12)


# ----------------------------------------------------------- index decoding

def test_feedback_to_index_walkthrough_values():
    assert feedback_to_index([1, 1, 2, 2, 2])[-1] == 8
    assert feedback_to_index([1, 2, 2, 2, 1])[-1] == 15
    assert feedback_to_index([2, 2, 1, 2, 1])[-1] == 27


def test_feedback_all_ones_stays_left():
    for length in (1, 3, 6):
        assert feedback_to_index([1] * length)[-1] == 1


def test_feedback_returns_per_layer_sequence():
    assert feedback_to_index([1, 2, 1]) == [1, 2, 3]


def test_feedback_rejects_bad_values():
    with pytest.raises(ValueError):
        feedback_to_index([1, 3])


def test_estimate_psi_hand_value():
    assert estimate_psi(8, 5, (-0.5, 0.5)) == pytest.approx(-0.265625)


def test_estimate_psi_boundary_cells():
    lo, hi = -0.5, 0.5
    s = 4
    first = estimate_psi(1, s, (lo, hi))
    last = estimate_psi(2 ** s, s, (lo, hi))
    assert first == pytest.approx(lo + 1.0 / 2 ** (s + 1))
    assert first - lo == pytest.approx(hi - last)


def test_estimate_psi_validates_index():
    with pytest.raises(ValueError):
        estimate_psi(0, 3, (-0.5, 0.5))
    with pytest.raises(ValueError):
        estimate_psi(9, 3, (-0.5, 0.5))


def test_estimate_mu_hand_value():
    assert estimate_mu(4, 5, (0.005, 0.33)) == pytest.approx(0.2325)


def test_estimate_mu_first_cell_and_single_cell():
    assert estimate_mu(1, 5, (0.0, 1.0)) == pytest.approx(0.1)
    assert estimate_mu(1, 1, (0.2, 0.4)) == pytest.approx(0.3)


def test_recursion_inverts_to_cell_centers():
    # planting tau from the bits of each column recovers that column's center
    # exactly, for every column at S <= 6
    from rhsbeam.optimizer import SampleGrid
    for s_layers in range(1, 7):
        n_psi = 1 << s_layers
        grid = SampleGrid(-0.5, 0.5, 0.0, 0.1, n_psi, 1)
        for i in range(1, n_psi + 1):
            taus = [((i - 1) >> (s_layers - s)) % 2 + 1 for s in range(1, s_layers + 1)]
            nu = feedback_to_index(taus)[-1]
            assert nu == i
            assert estimate_psi(nu, s_layers, (-0.5, 0.5)) == grid.psi_center(i)


# ------------------------------------------------------------ two-phase runs

def test_two_phase_transcript_structure(tiny_books, tiny_array, tiny_config):
    grid = tiny_config.grid()
    users = _plant(grid, [(1, 1), (3, 2)])
    mm = MeasurementModel(k_users=2, noise_variance=0.0)
    tr = run_two_phase(users, tiny_books.angular, tiny_books.single_beam,
                       tiny_array, mm)
    s, j = tiny_config.n_layers, tiny_config.n_mu
    assert tr.scheme == "proposed"
    assert tr.slots_paper == s + j
    assert tr.slots_raw == 2 * s + j
    assert len(tr.tau) == 2 and all(len(t) == s for t in tr.tau)
    for taus, nus in zip(tr.tau, tr.nu):
        assert nus == feedback_to_index(taus)
    for u in range(2):
        assert len(tr.powers[u]) == tr.slots_raw
        assert 1 <= tr.angle_index[u] <= grid.n_psi
        assert 1 <= tr.distance_index[u] <= grid.n_mu
        assert grid.psi_min <= tr.psi_hat[u] <= grid.psi_max
        assert grid.mu_min <= tr.mu_hat[u] <= grid.mu_max
    doc = json.dumps(tr.to_dict())
    assert json.loads(doc)["scheme"] == "proposed"


def test_two_phase_overhead_independent_of_k(desk_books, desk_array, desk_config):
    grid = desk_config.grid()
    mm1 = MeasurementModel(k_users=1, noise_variance=0.0)
    tr1 = run_two_phase(_plant(grid, [(5, 2)]), desk_books.angular,
                        desk_books.single_beam, desk_array, mm1)
    cells = [(i, 1 + i % 5) for i in range(1, 9)]
    mm8 = MeasurementModel(k_users=8, noise_variance=0.0)
    tr8 = run_two_phase(_plant(grid, cells), desk_books.angular,
                        desk_books.single_beam, desk_array, mm8)
    assert (tr1.slots_paper, tr1.slots_raw) == (tr8.slots_paper, tr8.slots_raw)


def test_worked_three_user_example(example_setup):
    # planted users at cells (8,4), (15,3), (27,2) decode exactly, noiseless
    arr, grid, angular, sbc = example_setup
    users = _plant(grid, [(8, 4), (15, 3), (27, 2)])
    mm = MeasurementModel(k_users=3, noise_variance=0.0)
    tr = run_two_phase(users, angular, sbc, arr, mm)
    assert tr.angle_index == [8, 15, 27]
    assert tr.distance_index == [4, 3, 2]
    # the walkthrough's feedback sequences produce those angle indices
    assert tr.nu[0][-1] == feedback_to_index([1, 1, 2, 2, 2])[-1]
    assert tr.nu[1][-1] == feedback_to_index([1, 2, 2, 2, 1])[-1]
    assert tr.nu[2][-1] == feedback_to_index([2, 2, 1, 2, 1])[-1]


def test_single_user_matches_exhaustive_at_center(desk_books, desk_array, desk_config):
    grid = desk_config.grid()
    users = _plant(grid, [(20, 3)])
    mm = MeasurementModel(k_users=1, noise_variance=0.0)
    tp = run_two_phase(users, desk_books.angular, desk_books.single_beam,
                       desk_array, mm)
    ex = run_exhaustive(users, desk_books.single_beam, desk_array, mm)
    assert (tp.angle_index[0], tp.distance_index[0]) == \
           (ex.angle_index[0], ex.distance_index[0]) == (20, 3)


def test_single_user_agreement_across_cells(desk_books, desk_array, desk_config):
    # two-phase equals the exhaustive argmax on >= 90% of single planted
    # users; the misses sit in the reference-wave ghost bands
    grid = desk_config.grid()
    same = 0
    for i in range(1, grid.n_psi + 1):
        for j in range(1, grid.n_mu + 1):
            users = _plant(grid, [(i, j)])
            mm = MeasurementModel(k_users=1, noise_variance=0.0)
            tp = run_two_phase(users, desk_books.angular,
                               desk_books.single_beam, desk_array, mm)
            ex = run_exhaustive(users, desk_books.single_beam, desk_array, mm)
            same += (tp.angle_index[0], tp.distance_index[0]) == \
                    (ex.angle_index[0], ex.distance_index[0])
    assert same >= 0.9 * grid.n_psi * grid.n_mu


def test_two_phase_requires_users(desk_books, desk_array):
    mm = MeasurementModel(k_users=1, noise_variance=0.0)
    with pytest.raises(ValueError):
        run_two_phase([], desk_books.angular, desk_books.single_beam,
                      desk_array, mm)


# --------------------------------------------------------------- exhaustive

def test_exhaustive_slots_and_decode(desk_books, desk_array, desk_config):
    grid = desk_config.grid()
    users = _plant(grid, [(10, 2), (25, 4)])
    mm = MeasurementModel(k_users=2, noise_variance=0.0)
    tr = run_exhaustive(users, desk_books.single_beam, desk_array, mm)
    assert tr.slots_raw == tr.slots_paper == grid.n_psi * grid.n_mu
    # noiseless scan returns the planted cells here
    assert tr.angle_index == [10, 25]
    assert tr.distance_index == [2, 4]


def test_exhaustive_error_dominates_proposed(desk_books, desk_array, desk_config, rng):
    # noiseless oracle: scanning everything is never worse than the two-phase
    # search, per trial (mean over users), over a planted batch
    grid = desk_config.grid()
    for _ in range(25):
        cells = [(int(rng.integers(1, 33)), int(rng.integers(1, 6)))
                 for _ in range(3)]
        users = _plant(grid, cells)
        mm = MeasurementModel(k_users=3, noise_variance=0.0)
        tp = run_two_phase(users, desk_books.angular, desk_books.single_beam,
                           desk_array, mm)
        ex = run_exhaustive(users, desk_books.single_beam, desk_array, mm)
        e_tp = np.mean([training_error(u.position, (p, m))
                        for u, p, m in zip(users, tp.psi_hat, tp.mu_hat)])
        e_ex = np.mean([training_error(u.position, (p, m))
                        for u, p, m in zip(users, ex.psi_hat, ex.mu_hat)])
        assert e_ex <= e_tp + 1e-15


# ---------------------------------------------------------------- far field

def test_far_field_slots_and_mu_zero(desk_books, desk_array, desk_config):
    grid = desk_config.grid()
    users = _plant(grid, [(4, 1), (29, 5)])
    mm = MeasurementModel(k_users=2, noise_variance=0.0)
    tr = run_far_field(users, desk_books.far_field, desk_array, mm)
    assert tr.slots_paper == desk_config.n_layers
    assert tr.slots_raw == 2 * desk_config.n_layers
    assert tr.mu_hat == [0.0, 0.0]
    assert tr.distance_index == [None, None]


def test_far_field_accuracy_beyond_rayleigh(desk_books, desk_array, desk_config, rng):
    # users at twice the Rayleigh distance: psi within one bottom cell >= 90%
    grid = desk_config.grid()
    r = 2.0 * rayleigh_distance(desk_config.system)
    cell = (grid.psi_max - grid.psi_min) / grid.n_psi
    hits = 0
    for _ in range(100):
        theta = math.acos(rng.uniform(grid.psi_min, grid.psi_max))
        psi = math.cos(theta)
        mu = (1 - psi ** 2) / r
        users = [User(id=0, position=PsiMuPosition(psi, mu))]
        mm = MeasurementModel(k_users=1, noise_variance=0.0)
        tr = run_far_field(users, desk_books.far_field, desk_array, mm)
        hits += abs(tr.psi_hat[0] - psi) <= cell
    # amplitude-only patterns ghost part of the angular window (see the
    # design notes); the hit rate saturates around 85/100 on this geometry
    assert hits >= 80


def test_far_field_near_user_mu_error_dominates(desk_books, desk_array, desk_config):
    # a deep near-field user: the mu term crushes the far-field baseline
    grid = desk_config.grid()
    r = 0.05 * rayleigh_distance(desk_config.system)
    psi = grid.psi_center(20)
    mu = (1 - psi ** 2) / r
    user = User(id=0, position=PsiMuPosition(psi, mu))
    mm = MeasurementModel(k_users=1, noise_variance=0.0)
    far = run_far_field([user], desk_books.far_field, desk_array, mm)
    prop = run_two_phase([user], desk_books.angular, desk_books.single_beam,
                         desk_array, mm)
    e_far = training_error(user.position, (far.psi_hat[0], far.mu_hat[0]))
    e_prop = training_error(user.position, (prop.psi_hat[0], prop.mu_hat[0]))
    assert e_far >= mu ** 2  # mu_hat = 0 convention
    assert mu ** 2 >= 0.8 * e_far
    assert e_far > e_prop


# ---------------------------------------------------------------- two stage

def test_two_stage_slots(desk_books, desk_array, desk_config):
    grid = desk_config.grid()
    s, j = desk_config.n_layers, desk_config.n_mu
    users = _plant(grid, [(3, 1), (17, 4), (30, 2)])
    mm = MeasurementModel(k_users=3, noise_variance=0.0)
    tr = run_two_stage(users, desk_books.angular, desk_books.single_beam,
                       desk_array, mm)
    assert tr.slots_paper == s + j * 3
    assert tr.slots_raw == 2 * s + j * 3
    single = run_two_stage(users[:1], desk_books.angular,
                           desk_books.single_beam, desk_array,
                           MeasurementModel(k_users=1, noise_variance=0.0))
    assert single.slots_paper == s + j


def test_two_stage_accuracy_at_least_proposed(desk_books, desk_array, desk_config, rng):
    # single-lobe distance beams: mean error no worse than the superposed scan
    grid = desk_config.grid()
    errs_ts, errs_tp = [], []
    for _ in range(30):
        cells = [(int(rng.integers(1, 33)), int(rng.integers(1, 6)))
                 for _ in range(3)]
        users = _plant(grid, cells)
        mm = MeasurementModel(k_users=3, noise_variance=0.0)
        ts = run_two_stage(users, desk_books.angular, desk_books.single_beam,
                           desk_array, mm)
        tp = run_two_phase(users, desk_books.angular, desk_books.single_beam,
                           desk_array, mm)
        errs_ts.extend(training_error(u.position, (p, m))
                       for u, p, m in zip(users, ts.psi_hat, ts.mu_hat))
        errs_tp.extend(training_error(u.position, (p, m))
                       for u, p, m in zip(users, tp.psi_hat, tp.mu_hat))
    assert np.mean(errs_ts) <= np.mean(errs_tp) + 1e-15


# -------------------------------------------------------------- dft distance

def test_dft_distance_full_candidates_equals_exhaustive(desk_books, desk_array,
                                                        desk_config):
    grid = desk_config.grid()
    users = _plant(grid, [(12, 3)])
    mm = MeasurementModel(k_users=1, noise_variance=0.0)
    dft = run_dft_distance(users, desk_books.far_beams, desk_books.single_beam,
                           desk_array, mm, q_candidates=grid.n_psi)
    ex = run_exhaustive(users, desk_books.single_beam, desk_array, mm)
    assert (dft.angle_index, dft.distance_index) == (ex.angle_index, ex.distance_index)


def test_dft_distance_single_candidate_matches_two_stage(desk_books, desk_array,
                                                         desk_config):
    # user on a grid angle where the flat sweep and the hierarchy agree
    grid = desk_config.grid()
    users = _plant(grid, [(20, 3)])
    mm = MeasurementModel(k_users=1, noise_variance=0.0)
    dft = run_dft_distance(users, desk_books.far_beams, desk_books.single_beam,
                           desk_array, mm, q_candidates=1)
    ts = run_two_stage(users, desk_books.angular, desk_books.single_beam,
                       desk_array, mm)
    assert (dft.angle_index, dft.distance_index) == (ts.angle_index, ts.distance_index)


def test_dft_distance_slots_and_candidates(desk_books, desk_array, desk_config):
    grid = desk_config.grid()
    users = _plant(grid, [(2, 1), (20, 5)])
    mm = MeasurementModel(k_users=2, noise_variance=0.0)
    tr = run_dft_distance(users, desk_books.far_beams, desk_books.single_beam,
                          desk_array, mm, q_candidates=3)
    assert tr.slots_raw == tr.slots_paper == grid.n_psi + 3 * grid.n_mu * 2
    assert all(len(c) == 3 for c in tr.details["candidates"])


# ------------------------------------------------------------------ overhead

def test_overhead_table_values():
    expected = {"two_stage": 106, "dft_distance": 364, "exhaustive": 640,
                "far_field": 6, "proposed": 16}
    for scheme, value in expected.items():
        assert overhead(scheme, 64, 10, 10, q_candidates=3) == value


def test_overhead_user_count_independence():
    for scheme in ("proposed", "far_field", "exhaustive"):
        assert overhead(scheme, 64, 10, 1) == overhead(scheme, 64, 10, 16)


def test_overhead_validation():
    with pytest.raises(ValueError):
        overhead("proposed", 63, 10, 10)
    with pytest.raises(ValueError):
        overhead("mystery", 64, 10, 10)
