import numpy as np
import pytest

import sta


def test_presets_and_macs():
    assert "toy" in sta.preset_names()
    net = sta.preset_network("toy")
    assert net.total_weights() <= 100_000
    conv2 = net.layers[1]
    assert conv2.name == "conv2"
    n, c, k, r, s, p, q = conv2.N, conv2.C, conv2.K, conv2.R, conv2.S, conv2.P, conv2.Q
    assert sta.dense_macs(conv2, sta.Phase.Forward) == n * c * k * r * s * p * q


def test_csb_round_trip_from_numpy():
    rng = np.random.default_rng(3)
    dense = rng.standard_normal((8, 4, 3, 3)).astype(np.float32)
    dense[rng.random(dense.shape) < 0.7] = 0.0
    t = sta.CsbTensor.encode(dense, 3, 3)
    assert t.nnz == int(np.count_nonzero(dense))
    assert t.block_count == 32
    np.testing.assert_array_equal(t.decode(), dense)
    assert t.block_nnz(5) == int(np.count_nonzero(dense.reshape(32, 9)[5]))


def test_quantile_tracks_uniform():
    q = sta.QuantileEstimator(0.9)
    q.update_many(np.random.default_rng(1).random(200_000))
    assert abs(q.threshold - 0.9) < 0.03


def test_weight_recompute_decays_to_zero():
    wr = sta.WeightRecompute(seed=7, size=100, scale=0.5, lambda_=0.9, cutoff=20)
    first = wr.fill(0)
    assert np.allclose(wr.fill(3), first * np.float32(0.9) ** 3, rtol=1e-5)
    assert not wr.fill(20).any()
    assert wr.value(11, 0) == pytest.approx(first[11])


def test_balancing_never_hurts():
    tiles = [[9.0, 8.0], [1.0, 1.0], [4.0, 4.0], [2.0, 3.0]]
    assert sta.balance_overhead(tiles, True) <= sta.balance_overhead(tiles, False)


def test_simulate_dense_is_unit_speedup():
    c = sta.RunConfig()
    c.network = "toy-small"
    c.synthetic = "dense"
    c.mappings = "kn"
    out = sta.simulate(c)
    assert out["runs"][0]["cycles"] == pytest.approx(out["dense_cycles"])
    assert out["runs"][0]["energy"]["total"] == pytest.approx(out["dense_energy"]["total"])


def test_bad_config_raises():
    c = sta.RunConfig()
    with pytest.raises(sta.ConfigError):
        c.apply_json('{"no_such_key": 1}')
    with pytest.raises(ValueError):
        sta.preset_network("nope")


def test_short_training_run(tmp_path):
    c = sta.RunConfig()
    c.network = "toy-small"
    c.epochs = 1
    c.train_samples = 256
    c.val_samples = 64
    out = sta.train(c, str(tmp_path))
    assert len(out["val_accuracy"]) == 1
    assert (tmp_path / "manifest.json").exists()
    assert (tmp_path / "masks" / "conv1.csb").exists()
    mask = sta.CsbTensor.load(str(tmp_path / "masks" / "conv1.csb"))
    assert mask.dense_shape == [4, 1, 3, 3]
