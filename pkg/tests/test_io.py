import json

import numpy as np
import pytest

from gwishart import cli
from gwishart.graph import from_edge_list, write_graph
from gwishart.io import (
    Dataset,
    InputFileError,
    RunReport,
    compute_scatter,
    generate_dataset,
    iris_virginica,
    load_dataset,
    read_matrix,
    upper_triangle_rows,
    write_matrix,
)
from gwishart.samplers import rng_stream

# -- datasets ---------------------------------------------------------------------


def test_bundled_iris():
    d = iris_virginica()
    assert (d.n, d.p) == (50, 4)
    assert d.variable_names == ["SL", "SW", "PL", "PW"]
    np.testing.assert_allclose(d.rows.mean(axis=0), [6.588, 2.974, 5.552, 2.026])


def test_single_value_file(tmp_path):
    path = tmp_path / "one.csv"
    path.write_text("3.5\n")
    d = load_dataset(path)
    assert (d.n, d.p) == (1, 1) and d.rows[0, 0] == 3.5 and d.variable_names is None


def test_header_only_file_has_no_rows(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("a,b\n")
    d = load_dataset(path)
    assert (d.n, d.p) == (0, 2)


@pytest.mark.parametrize(
    "text, match",
    [("1,2\n3\n", ":2:"), ("a,b\n1,2\nx,3\n", ":3:"), ("", "empty"), ("1,nan\n", "non-finite")],
)
def test_bad_datasets(tmp_path, text, match):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(InputFileError, match=match):
        load_dataset(path)


def test_scatter_examples():
    d = Dataset(np.array([[1.0, 0.0], [-1.0, 0.0]]))
    np.testing.assert_array_equal(compute_scatter(d, center=True).u, [[2, 0], [0, 0]])
    z = np.array([[1.0, 2.0, -1.0]])
    np.testing.assert_array_equal(compute_scatter(Dataset(z), center=False).u, np.outer(z, z))
    np.testing.assert_array_equal(compute_scatter(Dataset(z), center=True).u, np.zeros((3, 3)))
    sc = compute_scatter(Dataset(z), center=False)
    assert sc.n == 1 and not sc.centered


def test_centered_scatter_ignores_shifts():
    rows = np.random.default_rng(0).standard_normal((40, 3))
    a = compute_scatter(Dataset(rows), True).u
    b = compute_scatter(Dataset(rows + [5.0, -2.0, 100.0]), True).u
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_generated_data_moments():
    n = 100_000
    d = generate_dataset(np.eye(3), n, rng_stream(1))
    cov = d.rows.T @ d.rows / n
    assert np.abs(cov - np.eye(3)).max() < 3 * np.sqrt(2 / n) + 3 / np.sqrt(n)
    d4 = generate_dataset(np.diag([4.0, 4.0]), n, rng_stream(2))
    np.testing.assert_allclose(d4.rows.var(axis=0), 0.25, rtol=0.02)
    again = generate_dataset(np.eye(3), 10, rng_stream(3))
    np.testing.assert_array_equal(again.rows, generate_dataset(np.eye(3), 10, rng_stream(3)).rows)


# -- matrices and reports ------------------------------------------------------

def test_matrix_round_trip(tmp_path):
    m = np.random.default_rng(4).standard_normal((4, 4)) / 3
    path = tmp_path / "m.csv"
    write_matrix(m, path)
    np.testing.assert_array_equal(read_matrix(path), m)


@pytest.mark.parametrize("text", ["", "1,2\n3,4\n5,6\n", "1,a\n2,3\n", "1,2\n3\n"])
def test_bad_matrices(tmp_path, text):
    path = tmp_path / "m.csv"
    path.write_text(text)
    with pytest.raises(InputFileError):
        read_matrix(path)


def test_upper_triangle_rows():
    ks = np.arange(18.0).reshape(2, 3, 3)
    np.testing.assert_array_equal(upper_triangle_rows(ks)[0], [0, 1, 2, 4, 5, 8])


def test_report_round_trip(tmp_path):
    rep = RunReport("drj", {"seed": 1, "alpha_variant": "derived"},
                    {"edge_prob": np.eye(2), "accept_rate": np.float64(0.25)}, {"seconds": 1.0})
    path = tmp_path / "r.json"
    rep.write(path)
    back = RunReport.from_json(path.read_text())
    assert back.to_dict() == rep.to_dict()
    assert back.outputs["edge_prob"] == [[1.0, 0.0], [0.0, 1.0]]


# -- command line ---------------------------------------------------------------

C4_D = [[1.0, 0.5, 0.5, 0.0], [0.5, 1.0, 0.0, 0.5], [0.5, 0.0, 1.0, 0.5], [0.0, 0.5, 0.5, 1.0]]


@pytest.fixture
def files(tmp_path):
    g = tmp_path / "c4.txt"
    write_graph(from_edge_list(4, [(1, 2), (1, 3), (2, 4), (3, 4)]), g)
    d = tmp_path / "d.csv"
    write_matrix(np.array(C4_D) + np.eye(4), d)
    data = tmp_path / "data.csv"
    rows = generate_dataset(np.array([[2.0, 0.8, 0.0], [0.8, 2.0, 0.8], [0.0, 0.8, 2.0]]), 20, rng_stream(5)).rows
    np.savetxt(data, rows, delimiter=",", header="x,y,z", comments="")
    return tmp_path, str(g), str(d), str(data)


def _run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_sample_direct(files, capsys):
    tmp, g, d, _ = files
    samples = tmp / "s.csv"
    code, out, _ = _run(["sample", "--graph", g, "--delta", "103", "--dmat", d, "--iters", "500",
                         "--seed", "1", "--samples", str(samples)], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["inputs"]["seed"] == 1 and rep["outputs"]["n"] == 500
    mean = np.array(rep["outputs"]["mean_k"])
    assert abs(mean[0, 3]) < 1e-10 and abs(mean[1, 2]) < 1e-10
    rows = np.loadtxt(samples, delimiter=",")
    assert rows.shape == (500, 10)


def test_cli_sample_block_gibbs_reproducible(files, capsys):
    tmp, g, d, _ = files
    args = ["sample", "--graph", g, "--delta", "5", "--dmat", d, "--iters", "200", "--method", "block-gibbs",
            "--burnin", "5", "--chains", "20", "--seed", "3", "--out"]
    assert cli.main(args + [str(tmp / "a.json")]) == 0
    assert cli.main(args + [str(tmp / "b.json")]) == 0
    a, b = (json.loads((tmp / f).read_text()) for f in ("a.json", "b.json"))
    a.pop("timing"), b.pop("timing")
    assert a == b


def test_cli_mode(files, capsys):
    _, g, d, _ = files
    code, out, _ = _run(["mode", "--graph", g, "--delta", "103", "--dmat", d], capsys)
    assert code == 0
    k = np.array(json.loads(out)["outputs"]["mode_k"])
    assert abs(k[0, 3]) < 1e-12


def test_cli_drj_report_keys(files, capsys):
    _, _, _, data = files
    code, out, _ = _run(["drj", "--data", data, "--delta", "3", "--dmat-identity", "--iters", "60",
                         "--burnin", "10", "--chains", "4", "--seed", "2"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["inputs"]["alpha_variant"] == "derived" and rep["inputs"]["seed"] == 2
    assert rep["inputs"]["centered"] is True
    assert len(rep["outputs"]["edge_prob"]) == 3
    assert len(rep["outputs"]["per_chain_accept"]) == 4
    assert 0 <= rep["outputs"]["accept_rate"] <= 1


def test_cli_exact_header_only(tmp_path, capsys):
    path = tmp_path / "two_col.csv"
    path.write_text("a,b\n")
    code, out, _ = _run(["exact", "--data", str(path), "--delta", "3", "--dmat-identity"], capsys)
    assert code == 0
    probs = json.loads(out)["outputs"]["graph_prob"]
    assert probs == {"empty": 0.5, "1-2": 0.5}


def test_cli_exact_refuses_four_columns(tmp_path, capsys):
    path = tmp_path / "four.csv"
    path.write_text("1,2,3,4\n2,3,4,1\n")
    code, _, err = _run(["exact", "--data", str(path), "--delta", "3"], capsys)
    assert code == 2 and "at most 3" in err


def test_cli_exit_codes(files, capsys):
    tmp, g, d, data = files
    bad_d = tmp / "bad.csv"
    bad_d.write_text("1,2,0,0\n2,1,0,0\n0,0,1,0\n0,0,0,1\n")
    ragged = tmp / "ragged.csv"
    ragged.write_text("a,b\n1,2\n3\n")
    assert _run(["sample", "--graph", str(tmp / "missing.txt"), "--delta", "3", "--dmat", d,
                 "--iters", "5"], capsys)[0] == 3
    assert _run(["sample", "--graph", g, "--delta", "3", "--dmat", str(bad_d), "--iters", "5"], capsys)[0] == 3
    assert _run(["drj", "--data", str(ragged), "--delta", "3"], capsys)[0] == 3
    assert _run(["sample", "--graph", g, "--delta", "-1", "--dmat", d, "--iters", "5"], capsys)[0] == 2
    assert _run(["drj", "--data", data, "--delta", "3", "--iters", "10", "--burnin", "10"], capsys)[0] == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["sample", "--graph", g])
    assert info.value.code == 2
    capsys.readouterr()
    code, _, err = _run(["sample", "--graph", g, "--delta", "3", "--dmat", str(bad_d), "--iters", "5"], capsys)
    assert err.count("\n") == 1


def test_cli_numerical_failure_exit_code(files, capsys, monkeypatch):
    from gwishart.samplers import CompletionError

    def boom(*args, **kwargs):
        raise CompletionError("did not converge", 1e-3)
        yield

    monkeypatch.setattr(cli, "iter_direct", boom)
    _, g, d, _ = files
    assert _run(["sample", "--graph", g, "--delta", "3", "--dmat", d, "--iters", "5"], capsys)[0] == 4
