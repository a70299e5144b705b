import json

import numpy as np
import pytest

from simdiag import apps, cli


def write_matrix(path, A):
    A = np.atleast_2d(A)
    lines = [f"d={A.shape[0]}"] + [",".join(repr(float(x)) for x in row) for row in A]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def write_table(path, T, header=None):
    T = np.atleast_2d(T)
    lines = ([header] if header else []) + [",".join(repr(float(x)) for x in row) for row in T]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_read_matrix_csv_roundtrip(tmp_path):
    A = np.array([[1.0, 2.5], [-3.0, 4.0]])
    np.testing.assert_array_equal(cli.read_matrix_csv(write_matrix(tmp_path / "a.csv", A)), A)


@pytest.mark.parametrize("text", ["1,2\n3,4\n", "d=2\n1,2\n", "d=2\n1,x\n3,4\n", "d=2\n1,2,3\n3,4\n"])
def test_read_matrix_csv_malformed(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(cli.UsageError):
        cli.read_matrix_csv(p)


def test_simulate_missing_k_exits_2(capsys):
    code, _, err = run(["simulate", "--design", "partial", "--d", 4, "--p", 8, "--n", 100], capsys)
    assert code == 2
    assert "usage" in err and "--k" in err


def test_simulate_bad_snr_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "--design", "multi", "--d", "3", "--n", "10", "--snr", "abc"])
    assert exc.value.code == 2


def test_simulate_writes_outputs(tmp_path, capsys):
    out = tmp_path / "sim"
    code, stdout, _ = run(
        ["simulate", "--design", "two-sample", "--d", 3, "--n", 50, "--snr", "inf", "--replicates", 5, "--epsilon", "auto", "--out", out],
        capsys,
    )
    assert code == 0
    assert json.loads(stdout)["failures"] == 0
    doc = json.loads((out / "result.json").read_text())
    assert len(doc["p_values"]["commutator"]) == 5
    assert (out / "histogram_commutator.csv").read_text().splitlines()[0] == "bin_left,bin_right,count,fraction"


def _commuting_inputs(tmp_path):
    A = np.diag([1.0, 2.0, 3.0])
    B = np.diag([-1.0, 0.5, 2.0])
    tiny = 1e-6 * np.eye(9)
    return [
        "--estimate", write_matrix(tmp_path / "a.csv", A),
        "--cov", write_table(tmp_path / "ca.csv", tiny),
        "--estimate", write_matrix(tmp_path / "b.csv", B),
        "--cov", write_table(tmp_path / "cb.csv", tiny),
        "--n", 100,
    ]  # fmt: skip


def test_commutator_on_commuting_inputs(tmp_path, capsys):
    report = tmp_path / "r.json"
    code, _, _ = run(["test", "--method", "commutator", *_commuting_inputs(tmp_path), "--out", report], capsys)
    assert code == 0
    doc = json.loads(report.read_text())
    cli.validate_document(doc)
    assert doc["reports"][0]["p_value"] == 1.0
    assert len(doc["input_digest"]) == 64


def test_report_document_roundtrip(tmp_path, capsys):
    code, out, _ = run(["test", "--method", "commutator", *_commuting_inputs(tmp_path)], capsys)
    assert code == 0
    doc = json.loads(out)
    back = cli.ReportDocument.from_dict(doc)
    assert back.to_dict() == doc


def test_llr_without_reference_exits_2(tmp_path, capsys):
    code, _, err = run(["test", "--method", "llr", *_commuting_inputs(tmp_path)], capsys)
    assert code == 2
    assert "--reference" in err


def test_llr_with_reference(tmp_path, capsys):
    args = _commuting_inputs(tmp_path)
    refs = ["--reference", args[1], "--reference", args[5]]
    code, out, _ = run(["test", "--method", "llr", *args, *refs], capsys)
    assert code == 0
    assert json.loads(out)["reports"][0]["name"] == "llr"


def test_pairwise_over_three_inputs(tmp_path, capsys):
    rng = np.random.default_rng(0)
    args = []
    mats = []
    for i in range(3):
        A = rng.standard_normal((2, 2))
        mats.append(A)
        args += ["--estimate", write_matrix(tmp_path / f"a{i}.csv", A), "--cov", write_table(tmp_path / f"c{i}.csv", np.eye(4))]
    code, out, _ = run(["test", "--method", "pairwise", *args, "--n", 50], capsys)
    assert code == 0
    P = np.array(json.loads(out)["extra"]["pairwise_p_values"])
    assert P.shape == (3, 3)
    from simdiag.estimators import MatrixEstimate
    from simdiag.stattests import pairwise_pvalue_matrix

    ref = pairwise_pvalue_matrix([MatrixEstimate(A, np.eye(4), np.sqrt(50), 50) for A in mats])
    np.testing.assert_allclose(P, ref)


def test_dimension_mismatch_exits_2(tmp_path, capsys):
    args = [
        "--estimate", write_matrix(tmp_path / "a.csv", np.eye(2)),
        "--cov", write_table(tmp_path / "ca.csv", np.eye(4)),
        "--estimate", write_matrix(tmp_path / "b.csv", np.eye(3)),
        "--cov", write_table(tmp_path / "cb.csv", np.eye(9)),
        "--n", 10,
    ]  # fmt: skip
    code, _, _ = run(["test", "--method", "commutator", *args], capsys)
    assert code == 2


def test_multi_and_partial_from_samples(tmp_path, capsys):
    rng = np.random.default_rng(1)
    V = np.array([[1.0, 0.2, 0.0], [0.0, 1.0, 0.3], [0.1, 0.0, 1.0]])
    dirs = []
    for j, lam in enumerate(([1.0, 2.0, -1.0], [0.5, -1.5, 1.2])):
        M = V @ np.diag(lam) @ np.linalg.inv(V)
        d = tmp_path / f"s{j}"
        d.mkdir()
        for i in range(30):
            write_matrix(d / f"{i:03d}.csv", M + 0.1 * rng.standard_normal((3, 3)))
        dirs += ["--samples", d]
    code, out, _ = run(["test", "--method", "multi", *dirs, "--variant", "gamma"], capsys)
    assert code == 0
    assert json.loads(out)["reports"][0]["name"] == "multi_eig_gamma"
    code, out, _ = run(["test", "--method", "partial", *dirs, "--k", 1], capsys)
    assert code == 0
    assert json.loads(out)["reports"][0]["name"] == "partial_chi2"
    code, _, _ = run(["test", "--method", "partial", *dirs], capsys)
    assert code == 2


def test_var_command(tmp_path, capsys):
    rng = np.random.default_rng(2)
    Phi = np.array([[0.5, 0.1], [0.0, -0.3]])
    files = [write_table(tmp_path / f"y{i}.csv", apps.simulate_var([Phi], 300, rng), header="y1,y2") for i in range(2)]
    code, out, _ = run(["var", "--series", *files], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["extra"]["analysis"]["kind"] == "var"
    assert {r["name"] for r in doc["reports"]} == {"multi_eig_gamma", "partial_chi2", "partial_gamma"}


def test_var_too_short_errors(tmp_path, capsys):
    files = [write_table(tmp_path / f"y{i}.csv", np.ones((3, 2)) * i) for i in range(2)]
    code, _, _ = run(["var", "--series", *files], capsys)
    assert code != 0


def test_markov_command_with_bins(tmp_path, capsys):
    rng = np.random.default_rng(3)
    files = [write_table(tmp_path / f"x{i}.csv", rng.standard_normal((400, 1))) for i in range(2)]
    code, out, _ = run(["markov", "--chains", *files, "--bins", "0.25,0.75"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert {r["name"] for r in doc["reports"]} == {"partial_chi2", "partial_gamma"}
    assert doc["config"]["d"] == 3
    assert len(doc["extra"]["analysis"]["pi_common"]) == 3


def test_markov_requires_d_without_bins(tmp_path, capsys):
    f = write_table(tmp_path / "c.csv", np.array([[1.0], [2.0], [1.0]]))
    code, _, _ = run(["markov", "--chains", f, f], capsys)
    assert code == 2


def test_schema_rejects_tampered_document(tmp_path, capsys):
    import jsonschema

    code, out, _ = run(["test", "--method", "commutator", *_commuting_inputs(tmp_path)], capsys)
    doc = json.loads(out)
    doc["reports"][0]["p_value"] = 1.5
    with pytest.raises(jsonschema.ValidationError):
        cli.validate_document(doc)

