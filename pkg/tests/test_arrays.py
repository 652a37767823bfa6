import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isacsim.arrays import (
    DistributedGeometry,
    GeoChannelSpec,
    HybridConfig,
    Path,
    UlaGeometry,
    apply_phased,
    distributed_channel,
    distributed_response,
    favorable_propagation_gap,
    geo_channel,
    hardening_ratio,
    hardening_stats,
    hybrid_apply,
    mf_precoder,
    numerical_rank,
    rayleigh_channel,
    steering,
    steering_derivative,
    virtual_array_rank,
    zf_precoder,
)
from isacsim.io import read_channel, write_channel
from isacsim.signal_core import RngStream


# -- steering ---------------------------------------------------------------

def test_steering_broadside_all_ones():
    np.testing.assert_allclose(steering(UlaGeometry(5), 0.0), np.ones(5))


def test_steering_endfire_alternates():
    np.testing.assert_allclose(steering(UlaGeometry(4), np.pi / 2), [1, -1, 1, -1], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 64), st.floats(-np.pi / 2, np.pi / 2))
def test_steering_unit_modulus(n, theta):
    a = steering(UlaGeometry(n), theta)
    assert np.max(np.abs(np.abs(a) - 1)) < 1e-12
    assert np.vdot(a, a).real == pytest.approx(n, rel=1e-12)


def test_steering_vectorized_and_derivative():
    geom = UlaGeometry(6)
    thetas = np.array([-0.4, 0.1, 0.9])
    A = steering(geom, thetas)
    assert A.shape == (6, 3)
    np.testing.assert_allclose(A[:, 1], steering(geom, 0.1))
    h = 1e-6
    fd = (steering(geom, 0.3 + h) - steering(geom, 0.3 - h)) / (2 * h)
    np.testing.assert_allclose(steering_derivative(geom, 0.3), fd, atol=1e-8)


def test_asymptotic_orthogonality():
    vals = []
    for n in (8, 32, 128):
        geom = UlaGeometry(n)
        vals.append(abs(np.vdot(steering(geom, 0.0), steering(geom, 0.3))) / n)
    assert vals[0] > vals[1] > vals[2]


def test_geometry_validation():
    with pytest.raises(ValueError):
        UlaGeometry(0)
    with pytest.raises(ValueError):
        UlaGeometry(4, spacing=-1.0)
    assert UlaGeometry(4, wavelength=2.0).spacing == 1.0


# -- channels ---------------------------------------------------------------

def test_geo_channel_single_broadside_path():
    spec = GeoChannelSpec((Path(1.0, 0.0, 0.0),), UlaGeometry(3), UlaGeometry(2))
    H = geo_channel(spec)
    np.testing.assert_allclose(H.values, np.ones((2, 3)))
    assert H.provenance == "geometric"
    assert numerical_rank(H.values) == 1


@pytest.mark.parametrize("n_paths", [1, 2, 3, 5, 8])
def test_geo_channel_rank(n_paths):
    gen = RngStream(n_paths).generator()
    paths = tuple(Path(complex(*gen.standard_normal(2)), *gen.uniform(-1.2, 1.2, 2)) for _ in range(n_paths))
    H = geo_channel(GeoChannelSpec(paths, UlaGeometry(6), UlaGeometry(4))).values
    assert numerical_rank(H) == min(n_paths, 6, 4)


def test_geo_channel_linear_in_gains():
    paths = (Path(0.5 + 1j, 0.2, -0.3), Path(-1.0, 0.7, 0.1))
    scaled = tuple(Path(2.5j * p.gain, p.dod, p.doa) for p in paths)
    tx, rx = UlaGeometry(4), UlaGeometry(3)
    np.testing.assert_allclose(geo_channel(GeoChannelSpec(scaled, tx, rx)).values,
                               2.5j * geo_channel(GeoChannelSpec(paths, tx, rx)).values, atol=1e-12)


def test_geo_channel_validation():
    with pytest.raises(ValueError):
        GeoChannelSpec((), UlaGeometry(2), UlaGeometry(2))
    with pytest.raises(ValueError):
        GeoChannelSpec((Path(1, 2.0, 0.0),), UlaGeometry(2), UlaGeometry(2))


def test_rayleigh_statistics_and_reproducibility():
    H = rayleigh_channel(100, 1000, RngStream(1)).values
    assert abs(np.mean(np.abs(H) ** 2) - 1) < 0.02
    np.testing.assert_array_equal(rayleigh_channel(3, 4, RngStream(1, 2)).values,
                                  rayleigh_channel(3, 4, RngStream(1, 2)).values)
    assert not np.allclose(rayleigh_channel(3, 4, RngStream(1, 2)).values,
                           rayleigh_channel(3, 4, RngStream(1, 3)).values)


def test_rayleigh_rank_and_coefficient_count():
    for n_r, n_t in ((2, 5), (4, 4), (6, 3)):
        H = rayleigh_channel(n_r, n_t, RngStream(n_r * 10 + n_t)).values
        assert numerical_rank(H) == min(n_r, n_t)
        assert H.size == n_r * n_t


def test_channel_csv_round_trip(tmp_path):
    H = rayleigh_channel(3, 5, RngStream(4)).values
    path = write_channel(tmp_path / "h.csv", H)
    np.testing.assert_array_equal(read_channel(path), H)
    assert len(path.read_text().splitlines()[0].split(",")) == 10


# -- phased arrays ----------------------------------------------------------

def test_phased_matched_gain():
    tx, rx = UlaGeometry(8), UlaGeometry(4)
    alpha = 0.7 - 0.2j
    H = geo_channel(GeoChannelSpec((Path(alpha, 0.35, -0.6),), tx, rx)).values
    f = steering(tx, 0.35).conj()
    w = steering(rx, -0.6)
    y = apply_phased(H, f, w, [1.0])
    assert abs(y[0]) == pytest.approx(8 * 4 * abs(alpha), rel=1e-12)


def test_phased_misaligned_gain_small():
    tx, rx = UlaGeometry(64), UlaGeometry(64)
    H = geo_channel(GeoChannelSpec((Path(1.0, 0.0, 0.0),), tx, rx)).values
    f = steering(tx, np.pi / 2).conj()
    w = steering(rx, 0.0)
    assert abs(apply_phased(H, f, w, [1.0])[0]) < 0.1 * 64 * 64


def test_phased_siso_and_validation():
    y = apply_phased(np.array([[2.0 + 1j]]), [1.0], [1.0], [1.0, -1.0])
    np.testing.assert_allclose(y, [2 + 1j, -2 - 1j])
    with pytest.raises(ValueError):
        apply_phased(np.eye(2), [1.0, 0.5], [1.0, 1.0], [1.0])


# -- precoders --------------------------------------------------------------

def test_precoders_on_identity():
    for F in (zf_precoder(np.eye(3)), mf_precoder(np.eye(3))):
        np.testing.assert_allclose(F, np.eye(3), atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_zf_nulls_interference(seed):
    H = rayleigh_channel(2, 4, RngStream(seed)).values
    G = H @ zf_precoder(H)
    off = np.abs(G - np.diag(np.diag(G)))
    assert off.max() / np.abs(np.diag(G)).min() < 1e-10
    assert np.linalg.norm(zf_precoder(H)) ** 2 == pytest.approx(2.0)


def test_mf_equals_zf_on_orthogonal_rows():
    Q, _ = np.linalg.qr(rayleigh_channel(4, 4, RngStream(3)).values)
    H = Q[:2] * np.array([[2.0], [0.5]])
    F_zf, F_mf = zf_precoder(H), mf_precoder(H)
    scale = F_zf / F_mf
    for col in range(2):
        np.testing.assert_allclose(scale[:, col], scale[0, col], rtol=1e-10)


def test_zf_rank_deficient():
    with pytest.raises(np.linalg.LinAlgError):
        zf_precoder(np.ones((2, 4)))


# -- hybrid -----------------------------------------------------------------

def test_hybrid_equivalent_is_steering_matrix():
    geom = UlaGeometry(6)
    A = steering(geom, np.array([-0.3, 0.2, 0.5]))
    cfg = HybridConfig(A, np.eye(3))
    np.testing.assert_allclose(cfg.equivalent, A)
    y, F = hybrid_apply(np.eye(6), cfg, np.ones(3))
    np.testing.assert_allclose(y, A.sum(axis=1))


def test_hybrid_matches_digital_array_gain():
    tx, rx = UlaGeometry(16), UlaGeometry(4)
    H = geo_channel(GeoChannelSpec((Path(0.9j, 0.4, -0.1),), tx, rx)).values
    cfg = HybridConfig(steering(tx, 0.4).conj()[:, None], np.ones((1, 1)))
    _, F = hybrid_apply(H, cfg, np.ones(1))
    F_h = F / np.linalg.norm(F)
    v = np.linalg.svd(H)[2][0].conj()[:, None]
    ratio = np.linalg.norm(H @ F_h) / np.linalg.norm(H @ v)
    assert ratio >= 0.999


def test_hybrid_rejects_too_many_streams():
    with pytest.raises(ValueError):
        HybridConfig(np.ones((4, 2)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        HybridConfig(np.full((4, 2), 0.5), np.eye(2))


# -- massive MIMO -----------------------------------------------------------

def test_hardening_trend():
    rows = hardening_stats([4, 256], 4, 1000, RngStream(6))
    assert rows[0]["hardening"] >= 10 * rows[1]["hardening"]
    assert rows[0]["favorable_gap"] > rows[1]["favorable_gap"]
    # i.i.d. unit-variance entries: var(||h||^2)/E(||h||^2) = 1, normalized statistic = 1/N
    assert rows[0]["hardening"] == pytest.approx(0.25, rel=0.15)


def test_hardening_unnormalized_baseline_is_one():
    gen = RngStream(8).generator()
    h = (gen.standard_normal((20000, 32)) + 1j * gen.standard_normal((20000, 32))) / np.sqrt(2)
    g = np.sum(np.abs(h) ** 2, axis=1)
    assert g.var() / g.mean() == pytest.approx(1.0, rel=0.05)


def test_hardening_deterministic_channel():
    assert hardening_ratio(np.ones((50, 8))) == 0.0
    # DFT rows are orthogonal with squared norm N_t, the favorable limit
    assert favorable_propagation_gap(np.fft.fft(np.eye(8))[:3]) < 1e-12


def test_hardening_stats_validation():
    with pytest.raises(ValueError):
        hardening_stats([4], 2, 50, RngStream(0))


# -- distributed arrays and identifiability ---------------------------------

def test_distributed_single_element_is_scalar_phase():
    geom = DistributedGeometry([[0.0, 0.0]], [[3.0, 0.0]])
    a, b = distributed_response(geom, [0.0, 4.0], 0.1)
    assert a.shape == (1,) and b.shape == (1,)
    assert abs(a[0]) == pytest.approx(1.0) and abs(b[0]) == pytest.approx(1.0)


def test_distributed_equidistant_equal_phases():
    angles = np.linspace(0, 2 * np.pi, 5, endpoint=False)
    ring = np.column_stack([np.cos(angles), np.sin(angles)]) * 7.0
    a, b = distributed_response(DistributedGeometry(ring, ring), [0.0, 0.0], 0.3)
    np.testing.assert_allclose(a, a[0], atol=1e-12)


def test_distributed_half_wavelength_flips_sign():
    lam = 0.25
    geom = DistributedGeometry([[0.0, 0.0], [10.0, 0.0]], [[0.0, 5.0]])
    q = np.array([3.0, 4.0])
    u = q / np.linalg.norm(q)
    a1, _ = distributed_response(geom, q, lam)
    a2, _ = distributed_response(geom, q + u * lam / 2, lam)
    assert a2[0] == pytest.approx(-a1[0], abs=1e-9)


def test_distributed_inverse_amplitude_and_channel():
    geom = DistributedGeometry([[0.0, 0.0], [1.0, 0.0]], [[0.0, 1.0]])
    a, _ = distributed_response(geom, [0.0, 2.0], 0.5, amplitude="inverse")
    assert abs(a[0]) == pytest.approx(0.5)
    H = distributed_channel(geom, [[0.0, 2.0]], [1.0], 0.5)
    assert H.shape == (1, 2) and H.provenance == "distributed"
    with pytest.raises(ValueError):
        distributed_response(geom, [0.0, 0.0], 0.5)
    with pytest.raises(ValueError):
        distributed_response(geom, [0.0, 2.0], 0.5, amplitude="log")


@pytest.mark.parametrize("n_t,n_r", [(2, 2), (2, 3), (3, 4), (4, 4)])
def test_virtual_array_identifiability(n_t, n_r):
    m = n_t * n_r
    for n_targets in range(1, m):
        angles = np.arcsin(np.linspace(-0.9, 0.9, n_targets)) if n_targets > 1 else np.array([0.2])
        assert virtual_array_rank(n_t, n_r, angles) == n_targets
