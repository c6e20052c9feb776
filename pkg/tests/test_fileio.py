import struct

import numpy as np
import pytest

from graphpde import datagen, fileio, mpnn, render
from graphpde.errors import FormatError


def random_dataset(rng):
    kind = str(rng.choice(datagen.KINDS))
    spec = datagen.EquationSpec.default(kind, gt_grid=int(rng.integers(4, 200)),
                                        gt_dt=float(rng.random()) * 1e-3 + 1e-6)
    d = spec.state_dim
    sims = []
    for _ in range(int(rng.integers(0, 4))):
        n = int(rng.integers(1, 30))
        m1 = int(rng.integers(1, 6))
        times = np.cumsum(rng.random(m1) + 1e-3)
        sims.append(datagen.SimulationRecord(rng.standard_normal((n, 2)), times,
                                             rng.standard_normal((m1, n, d))))
    meta = {f"k{i}": "v=" + "ü" * i for i in range(int(rng.integers(0, 4)))}
    return datagen.Dataset(spec, sims, meta)


def random_model(rng):
    cfg = mpnn.SurrogateConfig(state_dim=int(rng.integers(1, 3)), hidden_width=int(rng.integers(1, 9)),
                               message_dim=int(rng.integers(1, 6)), hidden_layers=int(rng.integers(1, 4)),
                               n_graph_layers=int(rng.integers(1, 3)), use_edge_features=bool(rng.integers(2)))
    return mpnn.Model(cfg, rng.standard_normal(cfg.n_params), {"note": str(rng.integers(1000))})


def same_dataset(a, b):
    assert a.equation == b.equation
    assert a.metadata == b.metadata
    assert len(a) == len(b)
    for x, y in zip(a.simulations, b.simulations):
        for f in ("coords", "times", "states"):
            assert getattr(x, f).tobytes() == getattr(y, f).tobytes()


def test_dataset_round_trip_and_header(tmp_path):
    ds = random_dataset(np.random.default_rng(0))
    data = fileio.dataset_to_bytes(ds)
    assert data[:4] == b"GPDS" and struct.unpack("<I", data[4:8]) == (1,)
    p = tmp_path / "d.gpds"
    fileio.write_dataset(p, ds)
    same_dataset(ds, fileio.read_dataset(p))
    assert p.read_bytes() == data
    assert [q.name for q in tmp_path.iterdir()] == ["d.gpds"]


def test_model_round_trip(tmp_path):
    m = random_model(np.random.default_rng(1))
    p = tmp_path / "m.gpnn"
    fileio.write_model(p, m)
    back = fileio.read_model(p)
    assert back.cfg == m.cfg and back.metadata == m.metadata
    assert back.params.tobytes() == m.params.tobytes()


@pytest.mark.parametrize("cut", [3, 9, 40])
def test_truncation_detected(cut):
    data = fileio.dataset_to_bytes(random_dataset(np.random.default_rng(2)))
    with pytest.raises(FormatError):
        fileio.dataset_from_bytes(data[:cut])
    with pytest.raises(FormatError):
        fileio.dataset_from_bytes(data + b"\0")


def test_bad_magic_and_version():
    data = bytearray(fileio.model_to_bytes(random_model(np.random.default_rng(3))))
    with pytest.raises(FormatError):
        fileio.dataset_from_bytes(bytes(data))
    data[4] = 9
    with pytest.raises(FormatError):
        fileio.model_from_bytes(bytes(data))


def test_param_count_checked():
    m = random_model(np.random.default_rng(4))
    data = bytearray(fileio.model_to_bytes(m))
    # widen hidden_width in the header so the stored vector no longer fits
    struct.pack_into("<I", data, 12, m.cfg.hidden_width + 1)
    with pytest.raises(FormatError):
        fileio.model_from_bytes(bytes(data))


def test_metadata_key_with_equals_rejected():
    ds = random_dataset(np.random.default_rng(5))
    ds.metadata["a=b"] = "x"
    with pytest.raises(FormatError):
        fileio.dataset_to_bytes(ds)


def test_colormap_anchors_and_ppm():
    rgb = render.colormap(np.array([0.0, 0.5, 1.0, 2.0, -1.0]))
    assert rgb.tolist() == [[68, 1, 84], [33, 145, 140], [253, 231, 37], [253, 231, 37], [68, 1, 84]]
    img = render.heatmap(np.array([0.0, 1.0]), np.array([[0, 1], [1, 0]]), 0.0, 1.0)
    data = render.ppm_bytes(img)
    assert data.startswith(b"P6\n2 2\n255\n") and len(data) == 11 + 12
    assert np.array_equal(render.read_ppm(data), img)
    flat = render.heatmap(np.array([5.0, 5.0]), np.array([[0, 1]]), 5.0, 5.0)
    assert flat.tolist() == [[[68, 1, 84], [68, 1, 84]]]


def test_pixel_owner_orientation():
    coords = np.array([[0.1, 0.1], [0.9, 0.9]])
    own = render.pixel_owner(coords, (0, 0, 1, 1), size=4)
    # row 0 is the top edge, so the top-right pixel belongs to the upper-right node
    assert own[0, 3] == 1 and own[3, 0] == 0
