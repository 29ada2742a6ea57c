import numpy as np
import pytest

from beamfuse.dataset import Dataset
from beamfuse.errors import FormatError
from beamfuse.formats import (capture_bytes, capture_from_bytes, checkpoint_bytes, checkpoint_from_bytes,
                              dataset_bytes, dataset_from_bytes, read_dataset, write_dataset)
from beamfuse.nn import BeamFusionNet, ModelConfig


def _dataset():
    rng = np.random.default_rng(0)
    x = rng.random((5, 3, 4, 2, 6)).astype(np.float32).astype(float)
    return Dataset(x, [0, 1, 2, 0, 1], (-15.0, 15.0), 0.0414, 0.07, range_offset=29,
                   seeds=np.array([1, 2, 3, 4, 2**63 + 5], dtype=np.uint64), meta={"snr_db": -10.0})


def test_dataset_round_trip(tmp_path):
    ds = _dataset()
    blob = dataset_bytes(ds)
    back = dataset_from_bytes(blob)
    np.testing.assert_array_equal(back.x, ds.x)
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.seeds, ds.seeds)
    assert back.beam_angles_deg == ds.beam_angles_deg and back.range_offset == 29
    assert back.meta == ds.meta
    assert dataset_bytes(back) == blob
    write_dataset(ds, tmp_path / "d.bmxd")
    assert dataset_bytes(read_dataset(tmp_path / "d.bmxd")) == blob


@pytest.mark.parametrize("where", [20, -10, -2])
def test_corruption_detected(where):
    blob = bytearray(dataset_bytes(_dataset()))
    blob[where] ^= 0xFF
    with pytest.raises(FormatError):
        dataset_from_bytes(bytes(blob))


def test_bad_magic_and_truncation():
    blob = dataset_bytes(_dataset())
    with pytest.raises(FormatError):
        dataset_from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(FormatError):
        dataset_from_bytes(blob[:30])
    with pytest.raises(FormatError):
        capture_from_bytes(blob)


def test_capture_round_trip():
    rng = np.random.default_rng(1)
    cap = (rng.standard_normal((2, 8, 4, 2)) + 1j * rng.standard_normal((2, 8, 4, 2))).astype(np.complex64)
    blob = capture_bytes(cap, {"label": 3, "seed": 11})
    back, header = capture_from_bytes(blob)
    np.testing.assert_array_equal(back, cap)
    assert header["label"] == 3 and header["seed"] == 11
    assert capture_bytes(back, header) == blob


def test_checkpoint_round_trip():
    cfg = ModelConfig(range_bins=3, doppler_bins=4, n_beams=2, heads=2, conv_filters=(2,), latent_dim=4,
                      lstm_hidden=3)
    model = BeamFusionNet(cfg, seed=0)
    blob = checkpoint_bytes(model.params, vars(cfg))
    params, conf = checkpoint_from_bytes(blob)
    assert set(params) == set(model.params)
    for k in params:
        assert np.array_equal(params[k], model.params[k])
    assert conf["lstm_hidden"] == 3
    assert checkpoint_bytes(params, conf) == blob
