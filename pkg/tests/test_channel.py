import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chandiff.channel import (
    KMH,
    ChannelTensor,
    Domain,
    FrameConfig,
    PathSet,
    ScenarioConfig,
    ScenarioLabel,
    ad_to_sf,
    bearing,
    concat_datasets,
    default_scenarios,
    draw_paths,
    generate_dataset,
    load_dataset,
    max_doppler,
    save_dataset,
    scenario_by_name,
    steering_vector,
    synthesize_channel,
    to_angular_delay,
    to_spatial_frequency,
)
from chandiff.tensor import fft, to_complex, to_real

DESK = FrameConfig.desk()
SMALL = FrameConfig(n_rx=4, n_tx=2, n_subcarriers=16, n_symbols=3, n_delay=8)


def direct_synthesis(p: PathSet, f: FrameConfig) -> np.ndarray:
    h = np.zeros((f.n_rx, f.n_tx, f.n_subcarriers, f.n_symbols), dtype=complex)
    for m in range(f.n_rx):
        for n in range(f.n_tx):
            for k in range(f.n_subcarriers):
                for s in range(f.n_symbols):
                    for l in range(len(p)):
                        phase = p.phases[l] + 2 * np.pi * p.doppler[l] * s * f.symbol_duration
                        phase -= 2 * np.pi * k * f.subcarrier_spacing * p.delays[l]
                        ar = np.exp(-1j * np.pi * m * np.sin(p.aoa[l]))
                        at = np.exp(-1j * np.pi * n * np.sin(p.aod[l]))
                        h[m, n, k, s] += p.gains[l] * np.exp(1j * phase) * ar * np.conj(at)
    return h


def lag1_correlation(h: np.ndarray) -> float:
    z = to_complex(h)
    num = np.abs(np.sum(np.conj(z[..., :-1]) * z[..., 1:], axis=(0, 1, 2)))
    energy = np.sum(np.abs(z) ** 2, axis=(0, 1, 2))
    den = np.sqrt(energy[:-1] * energy[1:])
    return float(np.mean(num / den))


def label_in(sc: ScenarioConfig, v: float = 10.0) -> ScenarioLabel:
    return ScenarioLabel(sc.center[0] + 3.0, sc.center[1] - 2.0, v)


# -- frame and scenario ---------------------------------------------------


def test_frame_profiles():
    p = FrameConfig.paper()
    assert (p.n_rx, p.n_tx, p.n_subcarriers, p.n_symbols, p.n_delay) == (32, 1, 512, 14, 32)
    assert p.carrier == 2.655e9 and p.n_re == 512 * 14
    assert DESK.subcarrier_spacing == pytest.approx(10e6 / 64)
    assert DESK.symbol_duration == pytest.approx(64 / 10e6)


@pytest.mark.parametrize("kw", [dict(n_delay=32, n_subcarriers=16), dict(n_subcarriers=24), dict(n_rx=6), dict(n_symbols=0)])
def test_frame_rejects_invalid(kw):
    base = dict(n_rx=4, n_tx=1, n_subcarriers=16, n_symbols=2, n_delay=8) | kw
    with pytest.raises(ValueError):
        FrameConfig(**base)


def test_scenario_table_shape():
    table = default_scenarios()
    assert [s.name for s in table] == ["R1", "R2", "R3", "R4", "R5"]
    assert [s.n_clusters for s in table] == [40, 40, 5, 5, 10]
    assert [s.los for s in table] == [False, False, True, True, False]
    assert all(s.extent == 20.0 for s in table)
    with pytest.raises(KeyError):
        scenario_by_name("R9")


def test_label_validation():
    with pytest.raises(ValueError):
        ScenarioLabel(0.0, 0.0, -1.0)
    with pytest.raises(ValueError):
        ScenarioLabel(np.nan, 0.0, 1.0)


# -- steering vector --------------------------------------------------------


def test_steering_vector_examples():
    np.testing.assert_allclose(steering_vector(0.0, 4), np.ones(4))
    np.testing.assert_allclose(steering_vector(np.pi / 2, 2), [1, -1], atol=1e-15)
    np.testing.assert_allclose(steering_vector(np.pi / 6, 4), [1, -1j, -1, 1j], atol=1e-15)
    with pytest.raises(ValueError):
        steering_vector(0.0, 0)


# -- path draws ----------------------------------------------------------------


def test_zero_speed_has_no_doppler():
    sc = scenario_by_name("R1")
    p = draw_paths(sc, label_in(sc, 0.0), DESK, np.random.default_rng(0))
    np.testing.assert_array_equal(p.doppler, 0.0)


def test_single_los_path_follows_bearing():
    sc = ScenarioConfig("los1", (30.0, 40.0), 1, True, 1e-7, 0.3)
    lab = ScenarioLabel(32.0, 35.0, 5.0)
    p = draw_paths(sc, lab, DESK, np.random.default_rng(1))
    assert len(p) == 1
    assert p.aoa[0] == pytest.approx(np.arctan2(35.0, 32.0))
    assert p.gains[0] == pytest.approx(1.0)


def test_label_outside_extent_rejected():
    sc = scenario_by_name("R3")
    with pytest.raises(ValueError, match="outside"):
        draw_paths(sc, ScenarioLabel(sc.center[0] + 10.5, sc.center[1], 1.0), DESK, np.random.default_rng(0))


@pytest.mark.parametrize("name", ["R1", "R3", "R5"])
def test_path_invariants(name):
    sc = scenario_by_name(name)
    rng = np.random.default_rng(2)
    totals = []
    for _ in range(10_000 if name == "R3" else 500):
        p = draw_paths(sc, label_in(sc, 83.0), DESK, rng)
        totals.append(np.sum(p.gains**2))
        assert abs(totals[-1] - 1.0) < 1e-9
        assert np.all((p.delays >= 0) & (p.delays < DESK.max_delay))
        assert np.all(np.abs(p.doppler) <= max_doppler(83.0, DESK.carrier) + 1e-9)
    assert abs(np.mean(totals) - 1.0) < 1e-3


def test_los_dominant_direct_path():
    sc = scenario_by_name("R4")
    lab = label_in(sc)
    p = draw_paths(sc, lab, DESK, np.random.default_rng(3))
    assert np.argmax(p.gains) == 0 and p.delays[0] == 0.0
    assert p.aoa[0] == pytest.approx(bearing(lab.x, lab.y))


# -- synthesis -----------------------------------------------------------------


def test_degenerate_path_gives_all_ones():
    h = synthesize_channel(PathSet.single(), SMALL)
    assert h.domain is Domain.SPATIAL_FREQUENCY
    np.testing.assert_allclose(h.complex(), np.ones((4, 2, 16, 3)), atol=1e-15)


def test_synthesis_matches_direct_loop():
    sc = ScenarioConfig("t", (20.0, 10.0), 7, False, 2e-7, 0.5)
    rng = np.random.default_rng(4)
    p = draw_paths(sc, ScenarioLabel(22.0, 12.0, 80.0), SMALL, rng)
    h = synthesize_channel(p, SMALL).complex()
    assert np.max(np.abs(h - direct_synthesis(p, SMALL))) < 1e-10


def _mean_lag1(sc, speed, seeds):
    lab = label_in(sc, speed)
    return np.mean([
        lag1_correlation(synthesize_channel(draw_paths(sc, lab, DESK, np.random.default_rng(s)), DESK).data)
        for s in seeds
    ])


def test_faster_ue_decorrelates_faster():
    sc = scenario_by_name("R1")
    seeds = range(100)
    assert _mean_lag1(sc, 300 * KMH, seeds) < _mean_lag1(sc, 24 * KMH, seeds)


def test_doppler_monotonicity():
    sc = scenario_by_name("R5")
    seeds = range(100)
    corr = [_mean_lag1(sc, v, seeds) for v in (0.0, 5.0, 30.0, 83.0, 150.0)]
    assert all(a > b for a, b in zip(corr, corr[1:]))


# -- domain transforms ------------------------------------------------------------


def test_delay_bin_mapping():
    d = 5
    p = PathSet.single(delay=d * DESK.delay_resolution)
    g = to_angular_delay(synthesize_channel(p, DESK))
    power = np.sum(g.data**2, axis=-1)
    assert g.domain is Domain.ANGULAR_DELAY and g.data.shape == DESK.ad_shape
    peak = np.unravel_index(np.argmax(power[..., 0]), power[..., 0].shape)
    assert peak == (0, 0, d)
    assert power[0, 0, d].sum() / power.sum() > 1 - 1e-12


def test_round_trip_on_retained_support():
    rng = np.random.default_rng(5)
    g = ChannelTensor(rng.standard_normal(DESK.ad_shape), Domain.ANGULAR_DELAY, DESK)
    h = to_spatial_frequency(g)
    back = to_angular_delay(h)
    assert np.max(np.abs(back.data - g.data)) < 1e-9
    np.testing.assert_allclose(to_angular_delay(h).data, g.data, atol=1e-9)


def test_zero_maps_to_zero():
    z = ChannelTensor(np.zeros(DESK.sf_shape), Domain.SPATIAL_FREQUENCY, DESK)
    assert not np.any(to_angular_delay(z).data)
    assert not np.any(to_spatial_frequency(to_angular_delay(z)).data)


def test_single_bin_impulse_is_plane_wave():
    g = np.zeros(SMALL.ad_shape)
    a, d = 1, 3
    g[a, 0, d, :, 0] = 1.0
    h = to_complex(ad_to_sf(g, SMALL.n_subcarriers))
    m = np.arange(SMALL.n_rx)[:, None]
    k = np.arange(SMALL.n_subcarriers)[None, :]
    plane = np.exp(2j * np.pi * (a * m / SMALL.n_rx - d * k / SMALL.n_subcarriers)) / np.sqrt(SMALL.n_rx * SMALL.n_subcarriers)
    for s in range(SMALL.n_symbols):
        np.testing.assert_allclose(h[:, 0, :, s], plane, atol=1e-12)
    assert not np.any(h[:, 1])


def test_wrong_domain_rejected():
    g = ChannelTensor(np.zeros(DESK.ad_shape), Domain.ANGULAR_DELAY, DESK)
    with pytest.raises(ValueError, match="spatial-frequency"):
        to_angular_delay(g)
    with pytest.raises(ValueError, match="angular-delay"):
        to_spatial_frequency(to_spatial_frequency(g))
    with pytest.raises(ValueError):
        ChannelTensor(np.zeros(DESK.ad_shape), Domain.SPATIAL_FREQUENCY, DESK)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_energy_preserved_by_full_transform(seed):
    full = FrameConfig(n_rx=4, n_tx=1, n_subcarriers=16, n_symbols=2, n_delay=16)
    rng = np.random.default_rng(seed)
    h = ChannelTensor(rng.standard_normal(full.sf_shape), Domain.SPATIAL_FREQUENCY, full)
    assert abs(to_angular_delay(h).energy() - h.energy()) < 1e-9 * max(1.0, h.energy())


def test_sparsity_contrast():
    def active_bins(name):
        sc = scenario_by_name(name)
        counts = []
        for s in range(100):
            g = to_angular_delay(synthesize_channel(draw_paths(sc, label_in(sc), DESK, np.random.default_rng(s)), DESK))
            power = np.sum(g.data**2, axis=(-1, -2))
            counts.append(np.sum(power > 0.01 * power.max()))
        return np.mean(counts)

    assert active_bins("R3") < active_bins("R1")


# -- datasets ------------------------------------------------------------------------


def test_generate_dataset_counts_and_extents():
    ds = generate_dataset(default_scenarios(), 20, DESK, seed=7)
    assert len(ds) == 100 and ds.data.shape[1:] == DESK.ad_shape
    for si, sc in enumerate(default_scenarios()):
        rows = ds.labels[ds.scenario == si]
        assert len(rows) == 20
        assert all(sc.contains(x, y) for x, y, _ in rows)
        speeds, counts = np.unique(rows[:, 2], return_counts=True)
        np.testing.assert_allclose(speeds, [24 * KMH, 300 * KMH])
        assert list(counts) == [10, 10]


def test_generate_dataset_is_deterministic_across_threads():
    a = generate_dataset(default_scenarios()[:2], 4, DESK, seed=11)
    b = generate_dataset(default_scenarios()[:2], 4, DESK, seed=11, threads=3)
    assert a.data.tobytes() == b.data.tobytes()
    np.testing.assert_array_equal(a.seeds, b.seeds)
    c = generate_dataset(default_scenarios()[:2], 4, DESK, seed=12)
    assert not np.array_equal(a.data, c.data)


def test_generate_dataset_errors():
    with pytest.raises(ValueError, match="scenario"):
        generate_dataset([], 4, DESK, seed=0)
    with pytest.raises(ValueError, match="multiple"):
        generate_dataset(default_scenarios(), 5, DESK, seed=0)


def test_cfds_round_trip(tmp_path):
    ds = generate_dataset(default_scenarios()[2:4], 4, DESK, seed=3)
    path = save_dataset(ds, tmp_path / "train.cfds")
    assert path.read_bytes()[:4] == b"CFDS"
    back = load_dataset(path)
    assert back.frame == DESK and back.scenario_names == ["R3", "R4"]
    np.testing.assert_array_equal(back.data, ds.data.astype(np.float32))
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.seeds, ds.seeds)
    assert back.scenarios == ds.scenarios


def test_cfds_rejects_corruption(tmp_path):
    ds = generate_dataset(default_scenarios()[:1], 2, DESK, seed=3)
    path = save_dataset(ds, tmp_path / "x.cfds")
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(ValueError, match="payload"):
        load_dataset(path)
    (tmp_path / "y.cfds").write_bytes(b"NOPE")
    with pytest.raises(ValueError, match="CFDS"):
        load_dataset(tmp_path / "y.cfds")


def test_concat_remaps_scenarios():
    a = generate_dataset(default_scenarios()[:2], 2, DESK, seed=1)
    b = generate_dataset(default_scenarios()[1:3], 2, DESK, seed=2).with_generator("DM")
    u = concat_datasets([a, b])
    assert u.scenario_names == ["R1", "R2", "R3"]
    assert len(u.select_scenario("R2")) == 4
    assert set(u.generator[len(a):]) == {1}
