import numpy as np
import pytest

import dvhn


def small_config(**overrides):
    cfg = dvhn.TrainConfig()
    cfg.bits_K = 8
    cfg.outer_iters_T = 2
    cfg.inner_iters = 3
    cfg.P = 2
    cfg.K1 = 2
    cfg.seed = 7
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


def test_embedding_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    features = rng.standard_normal((6, 4)).astype(np.float32)
    data = dvhn.make_embedding_set(features, [9, 9, 3, 3, 5, 5])
    path = tmp_path / "e.emb"
    dvhn.save_embeddings(data, path)
    back = dvhn.load_embeddings(path)
    assert len(back) == 6
    assert back.dim == 4
    np.testing.assert_array_equal(back.features, features)
    assert back.labels == [0, 0, 1, 1, 2, 2]
    assert back.raw_labels == [9, 9, 3, 3, 5, 5]


def test_errors_map_to_exceptions(tmp_path):
    with pytest.raises(dvhn.IoError):
        dvhn.load_embeddings(tmp_path / "missing.emb")
    (tmp_path / "bad.emb").write_bytes(b"NOPE" + bytes(24))
    with pytest.raises(dvhn.Error):
        dvhn.load_embeddings(tmp_path / "bad.emb")
    cfg = dvhn.TrainConfig()
    cfg.bits_K = 0
    with pytest.raises(dvhn.ValidationError):
        cfg.validate()


def test_config_text_and_lambda_field():
    cfg = dvhn.parse_config("lambda = 0.5\nbits_K = 32\n")
    assert cfg.lambda_ == 0.5
    assert cfg.bits_K == 32
    assert dvhn.parse_config(str(cfg)).lambda_ == 0.5


def test_train_encode_evaluate(tmp_path):
    data = dvhn.generate_synthetic(4, 5, 6, 0.1, 3)
    result = dvhn.train(data, small_config())
    assert len(result.history) == 2
    assert result.params.bits == 8
    assert result.codes.shape == (8, 20)
    assert set(np.unique(result.codes)) <= {-1.0, 1.0}

    again = dvhn.train(data, small_config())
    assert again.params == result.params
    assert again.history == result.history

    codes = dvhn.encode(result.params, data)
    assert len(codes) == 20 and codes.bits == 8
    path = tmp_path / "c.dvhc"
    dvhn.save_codes(codes, path)
    assert dvhn.load_codes(path) == codes

    report = dvhn.evaluate(codes, codes, max_rank=5, exclude_self=True)
    assert set(report) == {"cmc", "map", "num_queries", "skipped"}
    assert len(report["cmc"]) == 5
    assert 0.0 <= report["map"] <= 1.0

    dvhn.save_checkpoint(result, tmp_path / "m.dvhm")
    params = dvhn.load_checkpoint_params(tmp_path / "m.dvhm")
    assert params.bits == 8


def test_packing_and_ranking():
    codes = np.array([[-1, -1, 1, 1], [1, 1, 1, 1], [-1, 1, 1, 1]], dtype=float)
    gallery = dvhn.pack_codes(codes, [5, 6, 7])
    query = dvhn.pack_codes(np.ones((1, 4)), [6])
    indices, distances = dvhn.rank(query, 0, gallery)
    assert indices == [1, 2, 0]
    assert distances == [0.0, 1.0, 2.0]
    assert dvhn.rank(query, 0, gallery, top_k=2)[0] == [1, 2]
    np.testing.assert_array_equal(gallery.unpack(), codes)
    assert gallery.distance(0, 1) == 2
    with pytest.raises(dvhn.ValidationError):
        dvhn.pack_codes(np.zeros((1, 4)), [0])


def test_cli_and_selftest():
    status, out, _ = dvhn.run_cli(["selftest"])
    assert status == 0
    assert all(passed for _, passed, _ in dvhn.selftest())
    groups = {name: passed for name, passed, _ in dvhn.selftest("gradient")}
    assert groups["gradient"] is False
    status, _, _ = dvhn.run_cli(["no-such-command"])
    assert status == 2
