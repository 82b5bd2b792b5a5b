import numpy as np
import pytest

from ekl.features import ScalarKernelSpec, fit_feature_map
from ekl.harness import gen_bilinear
from ekl.io import (MAGIC, ModelFormatError, load_csv, load_matrix_csv, load_model, save_csv, save_matrix_csv,
                    save_model, save_rows)
from ekl.ovk import EntangledModel
from ekl.solver import fit_operator_valued, fit_scalar, predict_features


def test_load_csv_hand_written(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("1,2,10\n3,4,20\n5,6,30\n")
    ds = load_csv(f, p=1)
    np.testing.assert_array_equal(ds.X, [[1, 2], [3, 4], [5, 6]])
    np.testing.assert_array_equal(ds.Y, [[10, 20, 30]])
    f.write_text("a,b,y\n1,2,10\n3,4,20\n5,6,30\n")
    np.testing.assert_array_equal(load_csv(f, p=1, header=True).Y, [[10, 20, 30]])
    ds = load_csv(f, p=1, header=True, layout="columns", output_columns=[0])
    np.testing.assert_array_equal(ds.Y, [[1, 3, 5]])
    np.testing.assert_array_equal(ds.X, [[2, 10], [4, 20], [6, 30]])


def test_load_csv_errors(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("1,2,nan\n3,4,5\n")
    with pytest.raises(ValueError):
        load_csv(f, p=1)
    f.write_text("1,2,x\n")
    with pytest.raises(ValueError):
        load_csv(f, p=1)
    f.write_text("1,2\n3,4,5\n")
    with pytest.raises(ValueError):
        load_csv(f, p=1)
    f.write_text("1,2\n")
    with pytest.raises(ValueError):
        load_csv(f, p=2)
    with pytest.raises(OSError):
        load_csv(tmp_path / "missing.csv", p=1)


def test_csv_round_trip(tmp_path):
    ds = gen_bilinear(6, 3, 2, seed=1)
    for header in (False, True):
        f = tmp_path / f"d{header}.csv"
        save_csv(f, ds, header=header)
        back = load_csv(f, p=3, header=header)
        np.testing.assert_array_equal(back.X, ds.X)
        np.testing.assert_array_equal(back.Y, ds.Y)
    M = np.random.default_rng(0).standard_normal((3, 4))
    save_matrix_csv(tmp_path / "m.csv", M)
    np.testing.assert_array_equal(load_matrix_csv(tmp_path / "m.csv"), M)


def _fit(mode, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((8, 3))
    Y = rng.standard_normal((2, 8))
    fm = fit_feature_map(ScalarKernelSpec("gaussian", 1.5), "nystrom", 5, X, seed=3)
    em = EntangledModel.normalized(rng.standard_normal((10, 6)), 2, feature_map=fm, gamma=0.3, lam=0.5)
    Phi = em.features(X)
    fit = fit_operator_valued(em, Phi, Y, 0.5) if mode == "ovk" else fit_scalar(em, Phi, Y, 0.5)
    return fit, rng.standard_normal((4, 3))


@pytest.mark.parametrize("mode", ["ovk", "scalar"])
def test_model_round_trip_bit_identical(tmp_path, mode):
    fit, Xt = _fit(mode)
    before = predict_features(fit, fit.model.features(Xt))
    path = tmp_path / "model.bin"
    save_model(path, fit, seed=7, extra={"note": "x"})
    back, header = load_model(path)
    after = predict_features(back, back.model.features(Xt))
    assert before.tobytes() == after.tobytes()
    assert header["seed"] == 7 and header["p"] == 2 and header["m"] == 5 and header["r"] == 6
    assert header["gamma"] == 0.3 and header["lambda"] == 0.5 and header["mode"] == mode
    assert path.read_bytes()[:8] == MAGIC


def test_model_file_errors(tmp_path):
    fit, _ = _fit("ovk")
    path = tmp_path / "model.bin"
    save_model(path, fit)
    raw = path.read_bytes()
    (tmp_path / "bad.bin").write_bytes(b"NOTMODEL" + raw[8:])
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(raw[:-16])
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "short.bin")
    with pytest.raises(ValueError):
        save_model(tmp_path / "x.bin", fit.__class__("krr-baseline", np.zeros((2, 2)), 1.0))
    assert not (tmp_path / "x.bin").exists()


def test_failed_write_leaves_nothing(tmp_path):
    class Boom:
        def items(self):
            raise RuntimeError("boom")

    with pytest.raises(RuntimeError):
        save_rows(tmp_path / "rows.csv", [Boom()], ["a"])
    assert list(tmp_path.iterdir()) == []
