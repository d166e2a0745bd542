import json
import os

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gelab import ExperimentConfig, bundled_config, load_config, parse_config_text
from gelab._errors import ConfigError, ContractViolation
from gelab.config import config_from_mapping
from gelab.io import (
    HEADER_SIZE,
    atomic_write_text,
    format_float,
    matrix_from_bytes,
    matrix_to_bytes,
    read_matrix_blob,
    read_matrix_csv,
    read_table_csv,
    table_to_csv_text,
    write_matrix_blob,
    write_matrix_csv,
)


def test_bundled_config_matches_experiment_shape():
    cfg = load_config(bundled_config())
    assert (cfg.d, cfg.n, cfg.p_grid) == (200, 600, (100, 200, 400, 800))
    assert (cfg.activation, cfg.loss, cfg.lam, cfg.teacher, cfg.output) == ("tanh", "logistic", 0.1, "sign", "sign")
    assert cfg.n_trials == 20


def test_parse_text_with_comments_and_sections():
    cfg = parse_config_text("d = 10  # latent\nn=5\np_grid = 2, 4\nsolver.max_iter = 50\ntilt.step = 0.01\n")
    assert cfg.d == 10 and cfg.n == 5 and cfg.p_grid == (2, 4)
    assert cfg.solver_max_iter == 50 and cfg.tilt_step == 0.01


def test_json_and_nested_forms():
    cfg = parse_config_text(json.dumps({"d": 10, "solver": {"max_iter": 7}, "p_grid": [3]}))
    assert cfg.solver_max_iter == 7 and cfg.p_grid == (3,)
    manifest = {"config": ExperimentConfig(d=11).to_mapping(), "outputs": {}}
    assert parse_config_text(json.dumps(manifest)).d == 11


@pytest.mark.parametrize("text,field", [
    ("p_grid = 200, 100", "p_grid"),
    ("p_grid = 100, 100", "p_grid"),
    ("lambda = 0", "lambda"),
    ("d = -3", "d"),
    ("activation = relu", "activation"),
    ("bogus = 1", "bogus"),
    ("n = 1.5", "n"),
    ("moments.order = 100", "moments.order"),
    ("mc.fresh_samples = 10", "mc.fresh_samples"),
    ("d = 1\nd = 2", "d"),
])
def test_invalid_configs_name_the_field(text, field):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    assert info.value.field == field


configs = st.builds(
    ExperimentConfig,
    d=st.integers(1, 10_000),
    n=st.integers(1, 10_000),
    p_grid=st.lists(st.integers(1, 5000), min_size=1, max_size=5, unique=True).map(sorted).map(tuple),
    activation=st.sampled_from(["tanh", "erf-scaled", "sine", "linear"]),
    loss=st.sampled_from(["logistic", "squared"]),
    lam=st.floats(1e-6, 1e3),
    master_seed=st.integers(0, 2**64 - 1),
    n_trials=st.integers(1, 100),
    fresh_samples=st.integers(1000, 10**7),
    tilt_step=st.one_of(st.none(), st.floats(1e-8, 1.0)),
    solver_tol=st.one_of(st.none(), st.floats(1e-14, 1e-4)),
)


@given(configs)
def test_config_text_round_trip(cfg):
    assert parse_config_text(cfg.to_text()) == cfg


@given(configs)
def test_config_json_round_trip(cfg):
    assert config_from_mapping(json.loads(json.dumps(cfg.to_mapping()))) == cfg


@given(st.lists(st.floats(allow_nan=False, width=64), min_size=1, max_size=20))
def test_float_format_round_trip(values):
    for v in values:
        assert float(format_float(v)) == v


def test_float_format_special():
    assert format_float(True) == "true" and format_float(np.int64(3)) == "3"
    assert format_float(float("nan")) == "nan" and format_float(-np.inf) == "-inf"


def test_table_round_trip(tmp_path):
    rows = [{"a": 1, "b": 0.1, "c": True}, {"a": 2, "b": float("nan"), "c": False}]
    path = tmp_path / "t.csv"
    atomic_write_text(path, table_to_csv_text(rows, ("a", "b", "c")))
    back = read_table_csv(path)
    assert back[0] == {"a": 1, "b": 0.1, "c": True}
    assert back[1]["a"] == 2 and np.isnan(back[1]["b"]) and back[1]["c"] is False


@given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 2**64 - 1))
def test_matrix_blob_round_trip(rows, cols, seed):
    M = np.random.default_rng(rows * 7 + cols).standard_normal((rows, cols))
    blob = matrix_to_bytes(M, seed)
    assert len(blob) == HEADER_SIZE + 8 * rows * cols
    back, s = matrix_from_bytes(blob)
    assert np.array_equal(back, M) and s == seed


def test_matrix_blob_layout():
    M = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    blob = matrix_to_bytes(M, 9)
    assert HEADER_SIZE == 24 and blob[:4] == b"GEL1"
    assert int.from_bytes(blob[4:8], "little") == 3 and int.from_bytes(blob[8:12], "little") == 2
    assert int.from_bytes(blob[16:24], "little") == 9
    # column-major payload
    assert np.array_equal(np.frombuffer(blob[24:], "<f8"), [1, 3, 5, 2, 4, 6])


def test_matrix_blob_corruption():
    blob = matrix_to_bytes(np.eye(2))
    with pytest.raises(ContractViolation):
        matrix_from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ContractViolation):
        matrix_from_bytes(blob[:-1])
    with pytest.raises(ContractViolation):
        matrix_to_bytes(np.zeros(3))


def test_matrix_files(tmp_path):
    M = np.random.default_rng(0).standard_normal((4, 3))
    write_matrix_blob(tmp_path / "m.gel", M, seed=5)
    write_matrix_csv(tmp_path / "m.csv", M)
    assert np.array_equal(read_matrix_blob(tmp_path / "m.gel")[0], M)
    assert np.array_equal(read_matrix_csv(tmp_path / "m.csv"), M)
    assert not [f for f in os.listdir(tmp_path) if f.startswith(".tmp")]
