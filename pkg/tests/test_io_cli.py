import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cpdegen.cli import ENV_OUTPUT_DIR, RunConfig, main
from cpdegen.cp import CpDecomposition, normalize
from cpdegen.degeneracy import SERIES_COLUMNS
from cpdegen.exceptions import InvalidArgument
from cpdegen.families import family_r3, family_r4, family_r6
from cpdegen.io import (
    cp_from_dict,
    cp_to_dict,
    format_value,
    load_tensor,
    matrix_from_dict,
    matrix_to_dict,
    read_csv,
    read_json,
    save_tensor,
    tensor_from_dict,
    tensor_to_dict,
    to_jsonable,
    write_csv,
    write_json,
)

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4)), elements=finite))
def test_tensor_dict_round_trip_is_exact(X):
    d = json.loads(json.dumps(tensor_to_dict(X)))
    np.testing.assert_array_equal(tensor_from_dict(d), X)


def test_tensor_dict_is_first_index_fastest():
    X = np.arange(1.0, 9.0).reshape((2, 2, 2), order="F")
    d = tensor_to_dict(X)
    assert d["dims"] == [2, 2, 2] and d["values"] == list(np.arange(1.0, 9.0))


def test_tensor_dict_errors():
    with pytest.raises(InvalidArgument):
        tensor_from_dict({"dims": [2, 2, 2], "values": [1.0] * 7})
    with pytest.raises(InvalidArgument):
        tensor_from_dict({"values": []})


def test_matrix_and_cp_round_trip(rng):
    M = rng.standard_normal((3, 2))
    np.testing.assert_array_equal(matrix_from_dict(json.loads(json.dumps(matrix_to_dict(M)))), M)
    cp = normalize(CpDecomposition.absorbed(*(rng.standard_normal((d, 2)) for d in (3, 4, 2))))
    back = cp_from_dict(json.loads(json.dumps(cp_to_dict(cp))))
    assert back.normalized
    for x, y in ((cp.A, back.A), (cp.B, back.B), (cp.C, back.C), (cp.weights, back.weights)):
        np.testing.assert_array_equal(x, y)


def test_json_and_csv_helpers(tmp_path):
    assert to_jsonable({"x": np.float64("nan"), "y": np.arange(2)}) == {"x": None, "y": [0, 1]}
    p = write_json(tmp_path / "sub" / "a.json", {"v": np.float64(0.1)})
    assert read_json(p) == {"v": 0.1}
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(InvalidArgument):
        read_json(tmp_path / "bad.json")
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(True) == "true" and format_value(3) == "3"
    p = write_csv(tmp_path / "t.csv", ["a", "b"], [[1, 0.5], [2, 1e-300]])
    header, rows = read_csv(p)
    assert header == ["a", "b"] and rows == [["1", "0.5"], ["2", "1e-300"]]
    assert float(rows[1][1]) == 1e-300


def test_save_load_tensor(tmp_path, rng):
    X = rng.standard_normal((2, 3, 4))
    np.testing.assert_array_equal(load_tensor(save_tensor(tmp_path / "x.json", X)), X)


tol_values = st.fixed_dictionaries({}, optional={
    "tol_prop": st.floats(1e-6, 1.0),
    "max_iters": st.integers(1, 100_000),
    "cond_cap": st.floats(1.0, 1e12),
})


@settings(max_examples=40, deadline=None)
@given(
    st.sampled_from(["sweep", "analyze", "fit", "example"]),
    st.lists(st.floats(1.0, 1e6), min_size=0, max_size=5),
    st.integers(0, 2**31 - 1),
    tol_values,
    st.one_of(st.none(), st.floats(0.1, 100.0)),
)
def test_run_config_round_trip(command, ns, seed, tols, n):
    cfg = RunConfig(command=command, family="r4", ns=tuple(ns), seed=seed, n=n, tolerances=tols, params={"a": 0.25})
    back = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


def test_run_config_rejects_unknown_keys():
    with pytest.raises(InvalidArgument):
        RunConfig.from_dict({"command": "sweep", "colour": 1})
    with pytest.raises(InvalidArgument):
        RunConfig(command="sweep", tolerances={"bogus": 1.0})
    with pytest.raises(InvalidArgument):
        RunConfig(command="plot")


def _read(path):
    return path.read_bytes()


def test_sweep_writes_csv_and_report(tmp_path, capsys):
    rc = main(["sweep", "--family", "r3", "--output-dir", str(tmp_path)])
    assert rc == 0
    header, rows = read_csv(tmp_path / "sweep_r3_example.csv")
    assert header == ["group", *SERIES_COLUMNS]
    assert [r[0] for r in rows] == ["all"] * 4 + ["0-1-2"] * 4
    assert [float(r[1]) for r in rows[:4]] == [10.0, 100.0, 1000.0, 10000.0]
    assert float(rows[-1][4]) == pytest.approx(0.6882472016116854, abs=1e-3)
    report = read_json(tmp_path / "report_r3_example.json")
    assert report["report"]["groups"][0]["verdict"] == "non-proportional"
    assert "non-proportional" in capsys.readouterr().out


def test_sweep_seeded_tag_and_custom_grid(tmp_path):
    rc = main(["sweep", "--family", "generic-332", "--seed", "4", "--ns", "10,100,1000", "--output-dir", str(tmp_path)])
    assert rc == 0
    _, rows = read_csv(tmp_path / "sweep_generic_332_seed4.csv")
    assert len(rows) == 6


@pytest.mark.parametrize("grid", ["", "10,100", "100,10,1000", "10,x"])
def test_sweep_bad_grid_exit_2(tmp_path, grid, capsys):
    try:
        rc = main(["sweep", "--family", "r3", "--ns", grid, "--output-dir", str(tmp_path)])
    except SystemExit as exc:  # argparse rejects unparsable values itself
        rc = exc.code
    assert rc == 2
    assert not list(tmp_path.iterdir())


def test_example_then_analyze_r4(tmp_path, capsys):
    assert main(["example", "--family", "r4", "--seed", "0", "--output-dir", str(tmp_path)]) == 0
    path = tmp_path / "r4_example_seed0.json"
    np.testing.assert_array_equal(load_tensor(path), family_r4(0).limit)
    capsys.readouterr()
    rc = main(["analyze", "--input", str(path), "--rank", "4", "--output-dir", str(tmp_path)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "partition {4}" in out and "zeros at (1,2),(3,4)" in out
    eigen = read_json(tmp_path / "eigen.json")
    assert eigen["pattern"]["zeros_upper"] == [[1, 2], [3, 4]]
    schur = read_json(tmp_path / "schur.json")
    assert schur["below_diag_residual"] < 1e-8 * schur["norm_X"]
    assert (tmp_path / "eigen.txt").read_text().splitlines() == out.splitlines()


def test_analyze_r6_reports_no_slicemix(tmp_path, capsys):
    save_tensor(tmp_path / "x.json", family_r6(0).limit)
    rc = main(["analyze", "--input", str(tmp_path / "x.json"), "--rank", "6", "--output-dir", str(tmp_path)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "slicemix: none" in out
    assert len(read_json(tmp_path / "eigen.json")["zero_diagonal"]) == 2


def test_analyze_exit_1_when_not_triangular(tmp_path, rng):
    save_tensor(tmp_path / "x.json", rng.standard_normal((4, 4, 4)))
    rc = main(["analyze", "--input", str(tmp_path / "x.json"), "--rank", "3", "--max-sweeps", "5",
               "--output-dir", str(tmp_path)])
    assert rc == 1


def test_analyze_missing_input_exit_2(tmp_path):
    assert main(["analyze", "--input", str(tmp_path / "nope.json"), "--rank", "3", "--output-dir", str(tmp_path)]) == 2
    assert main(["analyze", "--input", str(tmp_path / "nope.json"), "--output-dir", str(tmp_path)]) == 2


def test_fit_outputs_and_exit_codes(tmp_path, rng):
    save_tensor(tmp_path / "x.json", family_r3().limit)
    rc = main(["fit", "--input", str(tmp_path / "x.json"), "--rank", "3", "--max-iters", "30",
               "--rel-tol", "0", "--output-dir", str(tmp_path)])
    assert rc == 1
    header, rows = read_csv(tmp_path / "fit_trace.csv")
    assert header == ["iter", "fit_error", "omega_1", "omega_2", "omega_3", "min_congruence", "max_abs_omega"]
    assert len(rows) == 30
    fit = read_json(tmp_path / "fit.json")
    assert fit["reason"] == "max_iters" and fit["iterations"] == 30
    save_tensor(tmp_path / "y.json", np.zeros((2, 2, 2)))
    assert main(["fit", "--input", str(tmp_path / "y.json"), "--rank", "1", "--output-dir", str(tmp_path)]) == 0


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(ENV_OUTPUT_DIR, str(tmp_path / "env"))
    assert main(["example", "--family", "r3"]) == 0
    assert (tmp_path / "env" / "r3_example.json").exists()


def test_config_file_and_flag_override(tmp_path):
    cfg_path = tmp_path / "run.json"
    assert main(["example", "--family", "r3", "--a", "0.5", "--output-dir", str(tmp_path / "one"),
                 "--save-config", str(cfg_path)]) == 0
    cfg = RunConfig.load(cfg_path)
    assert cfg.params == {"a": 0.5}
    assert main(["example", "--config", str(cfg_path), "--output-dir", str(tmp_path / "two")]) == 0
    assert _read(tmp_path / "one" / "r3_example.json") == _read(tmp_path / "two" / "r3_example.json")
    X = load_tensor(tmp_path / "two" / "r3_example.json")
    np.testing.assert_array_equal(X, family_r3(a=0.5).limit)
    assert main(["sweep", "--config", str(cfg_path)]) == 2


def test_sweep_is_byte_reproducible(tmp_path):
    for d in ("a", "b"):
        assert main(["sweep", "--family", "r6", "--seed", "1", "--output-dir", str(tmp_path / d)]) == 0
    name = "sweep_r6_example_seed1.csv"
    assert _read(tmp_path / "a" / name) == _read(tmp_path / "b" / name)
