"""Command-line interface: flags, outputs and exit codes."""
import numpy as np
import pytest
import scipy.io

import grfem.convergence as conv
from grfem import cli
from grfem.convergence import HEADER, read_report
from grfem.mesh import generate_uniform, write_mesh


@pytest.fixture
def tiny_bases(monkeypatch):
    """Shrink the default schedules so that studies run in a second."""
    monkeypatch.setattr(conv, "SQUARE_BASE", 4)
    monkeypatch.setattr(conv, "LSHAPE_BASE", 4)
    monkeypatch.setattr(conv, "DISK_BASE", 2)


def test_flags_exist():
    text = cli.build_parser().format_help()
    for flag in (
        "--example",
        "--pattern",
        "--levels",
        "--recovery",
        "--mesh",
        "--format",
        "--out",
        "--dump-matrices",
    ):
        assert flag in text


def test_pattern_choices():
    action = next(a for a in cli.build_parser()._actions if a.dest == "pattern")
    assert set(action.choices) == {
        "regular",
        "chevron",
        "crisscross",
        "unionjack",
        "delaunay-file",
        "disk",
        "lshape",
    }


def test_csv_to_stdout(tiny_bases, capsys):
    assert cli.main(["--example", "1", "--levels", "2", "--quiet"]) == cli.EXIT_OK
    out = capsys.readouterr().out.strip().split("\n")
    assert out[0] == ",".join(HEADER)
    assert [r.split(",")[0] for r in out[1:]] == ["25", "81"]


def test_markdown_to_file(tiny_bases, tmp_path):
    out = tmp_path / "table.md"
    code = cli.main(["--example", "2", "--pattern", "crisscross", "--levels", "2", "--format", "markdown", "--out", str(out), "--quiet"])
    assert code == cli.EXIT_OK
    lines = out.read_text().strip().split("\n")
    assert len(lines) == 4 and lines[0].startswith("| Dof |")


@pytest.mark.parametrize("method", ["wa", "spr", "ppr"])
def test_recovery_flag(tiny_bases, tmp_path, method):
    out = tmp_path / "t.csv"
    assert cli.main(["--example", "4", "--levels", "2", "--recovery", method, "--out", str(out), "--quiet"]) == 0
    dofs, errors, _ = read_report(out)
    assert dofs[1] > dofs[0] and np.all(errors > 0)


def test_disk_example(tiny_bases, tmp_path):
    out = tmp_path / "t.csv"
    assert cli.main(["--example", "3", "--levels", "2", "--out", str(out), "--quiet"]) == 0


def test_dump_matrices(tiny_bases, tmp_path):
    out = tmp_path / "t.csv"
    assert cli.main(["--example", "1", "--levels", "2", "--dump-matrices", "--out", str(out), "--quiet"]) == 0
    k = scipy.io.mmread(tmp_path / "K_81.mtx")
    c = scipy.io.mmread(tmp_path / "C_81.mtx")
    assert k.shape == (81, 81) and c.shape[1] == 81
    assert (tmp_path / "K_25.mtx").exists() and (tmp_path / "C_25.mtx").exists()


def test_mesh_file(tmp_path):
    write_mesh(generate_uniform("regular", 4), tmp_path / "sq")
    out = tmp_path / "t.csv"
    code = cli.main(["--example", "2", "--pattern", "delaunay-file", "--mesh", str(tmp_path / "sq"), "--levels", "2", "--out", str(out), "--quiet"])
    assert code == 0
    assert list(read_report(out)[0]) == [25, 81]


def test_progress_on_stderr(tiny_bases, capsys):
    assert cli.main(["--example", "1", "--levels", "2"]) == 0
    err = capsys.readouterr().err
    assert "dof 25" in err and "dof 81" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["--levels", "2"],
        ["--example", "5"],
        ["--example", "1", "--levels", "1"],
        ["--example", "1", "--pattern", "hexagonal"],
        ["--example", "1", "--pattern", "disk"],
        ["--example", "2", "--pattern", "delaunay-file"],
        ["--example", "2", "--pattern", "regular", "--mesh", "m"],
        ["--example", "1", "--format", "xml"],
    ],
)
def test_invalid_arguments(argv, capsys):
    assert cli.main(argv) == cli.EXIT_USAGE


def test_missing_mesh_file(tmp_path):
    code = cli.main(["--example", "2", "--mesh", str(tmp_path / "nothing"), "--quiet"])
    assert code == cli.EXIT_IO


def test_unwritable_output(tiny_bases, tmp_path):
    code = cli.main(["--example", "1", "--levels", "2", "--out", str(tmp_path / "no" / "dir" / "t.csv"), "--quiet"])
    assert code == cli.EXIT_IO


def test_numerical_failure(tiny_bases, monkeypatch):
    from grfem.sparse import SingularSystemError

    def broken(*args, **kwargs):
        raise SingularSystemError("factorization failed")

    monkeypatch.setattr(conv, "solve_bvp", broken)
    assert cli.main(["--example", "1", "--levels", "2", "--quiet"]) == cli.EXIT_NUMERICAL


def test_unrecoverable_mesh(tmp_path):
    # a two-triangle square has too few vertices for any quadratic fit
    (tmp_path / "one.node").write_text("4 2 0 0\n1 0 0\n2 1 0\n3 1 1\n4 0 1\n")
    (tmp_path / "one.ele").write_text("2 3 0\n1 1 2 3\n2 1 3 4\n")
    code = cli.main(["--example", "2", "--mesh", str(tmp_path / "one"), "--levels", "2", "--quiet"])
    assert code == cli.EXIT_NUMERICAL
