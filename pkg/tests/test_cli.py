import csv
import struct

import numpy as np
import pytest

from wmgtomo.cli import (EXIT_ARG_ERROR, EXIT_NUMERICAL_ERROR, FORMAT_VERSION,
                         MAGIC, main, read_grid, write_grid, write_pgm)
from wmgtomo.phantom import shepp_logan


def run(*argv):
    return main([str(a) for a in argv])


class TestGridFormat:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "grid.bin"
        values = np.linspace(-3, 7, 12)
        write_grid(path, values, 3, 4)
        data, rows, cols = read_grid(path)
        assert (rows, cols) == (3, 4)
        np.testing.assert_array_equal(data, values)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "grid.bin"
        write_grid(path, np.zeros(6), 2, 3)
        raw = path.read_bytes()
        assert raw[:4] == MAGIC
        assert struct.unpack("<III", raw[4:16]) == (FORMAT_VERSION, 2, 3)
        assert len(raw) == 16 + 6 * 8

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"XXXX" + b"\0" * 12)
        with pytest.raises(Exception):
            read_grid(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "trunc.bin"
        write_grid(path, np.zeros(6), 2, 3)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(Exception):
            read_grid(path)

    def test_wrong_version_rejected(self, tmp_path):
        path = tmp_path / "ver.bin"
        raw = MAGIC + struct.pack("<III", 99, 1, 1) + b"\0" * 8
        path.write_bytes(raw)
        with pytest.raises(Exception):
            read_grid(path)

    def test_pgm_header(self, tmp_path):
        path = tmp_path / "img.pgm"
        write_pgm(path, np.arange(4.0), 2, 2)
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n2 2\n255\n")
        assert raw[-4:] == bytes([0, 85, 170, 255])


class TestPhantomCommand:
    def test_writes_grid_and_manifest(self, tmp_path):
        out = tmp_path / "ph.bin"
        assert run("phantom", "--n", 16, "--out", out) == 0
        data, rows, cols = read_grid(out)
        assert (rows, cols) == (16, 16)
        np.testing.assert_array_equal(data, shepp_logan(16))
        manifest = (tmp_path / "ph.bin.manifest").read_text()
        assert "command=phantom" in manifest
        assert "n=16" in manifest

    def test_pgm_preview(self, tmp_path):
        out = tmp_path / "ph.bin"
        pgm = tmp_path / "ph.pgm"
        assert run("phantom", "--n", 8, "--out", out, "--pgm", pgm) == 0
        assert pgm.read_bytes().startswith(b"P5\n8 8\n")


class TestProjectCommand:
    def test_project_shapes(self, tmp_path):
        ph = tmp_path / "ph.bin"
        sino = tmp_path / "sino.bin"
        run("phantom", "--n", 16, "--out", ph)
        assert run("project", "--image", ph, "--angles", 12,
                   "--detectors", 20, "--out", sino) == 0
        _, rows, cols = read_grid(sino)
        assert (rows, cols) == (12, 20)

    def test_noise_requires_seed(self, tmp_path):
        ph = tmp_path / "ph.bin"
        run("phantom", "--n", 8, "--out", ph)
        code = run("project", "--image", ph, "--angles", 4,
                   "--detectors", 8, "--noise", 0.01,
                   "--out", tmp_path / "s.bin")
        assert code == EXIT_ARG_ERROR

    def test_noiseless_runs_are_byte_identical(self, tmp_path):
        ph = tmp_path / "ph.bin"
        run("phantom", "--n", 16, "--out", ph)
        s1, s2 = tmp_path / "s1.bin", tmp_path / "s2.bin"
        run("project", "--image", ph, "--angles", 8, "--detectors", 16,
            "--out", s1)
        run("project", "--image", ph, "--angles", 8, "--detectors", 16,
            "--out", s2)
        assert s1.read_bytes() == s2.read_bytes()

    def test_seeded_noise_is_reproducible(self, tmp_path):
        ph = tmp_path / "ph.bin"
        run("phantom", "--n", 16, "--out", ph)
        s1, s2 = tmp_path / "s1.bin", tmp_path / "s2.bin"
        for s in (s1, s2):
            run("project", "--image", ph, "--angles", 8, "--detectors", 16,
                "--noise", 0.01, "--seed", 5, "--out", s)
        assert s1.read_bytes() == s2.read_bytes()

    def test_missing_file_is_arg_error(self, tmp_path):
        code = run("project", "--image", tmp_path / "nope.bin",
                   "--angles", 4, "--detectors", 8, "--out", tmp_path / "s")
        assert code == EXIT_ARG_ERROR


@pytest.fixture()
def small_problem(tmp_path):
    ph = tmp_path / "ph.bin"
    sino = tmp_path / "sino.bin"
    run("phantom", "--n", 16, "--out", ph)
    run("project", "--image", ph, "--angles", 24, "--detectors", 24,
        "--out", sino)
    return ph, sino, tmp_path


class TestReconstructCommand:
    def test_sirt_reconstruction_with_log(self, small_problem):
        ph, sino, tmp = small_problem
        out, log = tmp / "x.bin", tmp / "conv.csv"
        assert run("reconstruct", "--sino", sino, "--n", 16, "--angles", 24,
                   "--detectors", 24, "--solver", "sirt", "--iters", 30,
                   "--xexact", ph, "--out", out, "--log", log) == 0
        with open(log) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 31
        assert rows[0]["iter"] == "0" and rows[0]["rel_res"] == "1.0"
        assert float(rows[-1]["rel_err_l2"]) < float(rows[0]["rel_err_l2"])

    def test_wmg_bicgstab_converges(self, small_problem):
        ph, sino, tmp = small_problem
        out, log = tmp / "x.bin", tmp / "conv.csv"
        assert run("reconstruct", "--sino", sino, "--n", 16, "--angles", 24,
                   "--detectors", 24, "--solver", "wmg-bicgstab",
                   "--levels", 2, "--lambda", 1.0, "--iters", 30,
                   "--xexact", ph, "--out", out, "--log", log) == 0
        with open(log) as fh:
            rows = list(csv.DictReader(fh))
        assert float(rows[-1]["rel_err_l2"]) < 0.2

    def test_iters_zero_writes_zero_image(self, small_problem):
        _, sino, tmp = small_problem
        out, log = tmp / "x.bin", tmp / "conv.csv"
        assert run("reconstruct", "--sino", sino, "--n", 16, "--angles", 24,
                   "--detectors", 24, "--solver", "sirt", "--iters", 0,
                   "--out", out, "--log", log) == 0
        data, _, _ = read_grid(out)
        np.testing.assert_array_equal(data, 0.0)
        with open(log) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1 and rows[0]["rel_err_l2"] == ""

    def test_levels_without_wmg_rejected(self, small_problem):
        _, sino, tmp = small_problem
        code = run("reconstruct", "--sino", sino, "--n", 16, "--angles", 24,
                   "--detectors", 24, "--solver", "sirt", "--levels", 2,
                   "--iters", 5, "--out", tmp / "x", "--log", tmp / "l")
        assert code == EXIT_ARG_ERROR

    def test_sinogram_shape_mismatch_rejected(self, small_problem):
        _, sino, tmp = small_problem
        code = run("reconstruct", "--sino", sino, "--n", 16, "--angles", 10,
                   "--detectors", 24, "--solver", "sirt", "--iters", 5,
                   "--out", tmp / "x", "--log", tmp / "l")
        assert code == EXIT_ARG_ERROR

    def test_singular_coarse_problem_is_numerical_error(self, tmp_path):
        # a single axis-aligned angle leaves the oscillatory coarse Gram
        # matrices singular, which must surface as a numerical failure
        ph = tmp_path / "ph.bin"
        sino = tmp_path / "sino.bin"
        run("phantom", "--n", 4, "--out", ph)
        run("project", "--image", ph, "--angles", 1, "--detectors", 4,
            "--out", sino)
        code = run("reconstruct", "--sino", sino, "--n", 4, "--angles", 1,
                   "--detectors", 4, "--solver", "wmg-bicgstab",
                   "--levels", 2, "--iters", 5,
                   "--out", tmp_path / "x", "--log", tmp_path / "l")
        assert code == EXIT_NUMERICAL_ERROR


class TestSpectrumCommand:
    def test_sirt_spectrum_csv(self, tmp_path):
        out = tmp_path / "spec.csv"
        assert run("spectrum", "--n", 16, "--angles", 24, "--detectors", 24,
                   "--operator", "sirt-s", "--out", out) == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 256
        mags = [float(r["magnitude"]) for r in rows]
        assert mags == sorted(mags)

    def test_wtg_kappa_in_manifest(self, tmp_path, capsys):
        out = tmp_path / "spec.csv"
        assert run("spectrum", "--n", 16, "--angles", 24, "--detectors", 24,
                   "--operator", "wtg", "--lambda", 1.0, "--out", out) == 0
        assert "kappa" in capsys.readouterr().out
        manifest = (tmp_path / "spec.csv.manifest").read_text()
        assert "condition_number=" in manifest

    def test_eigenmode_export(self, tmp_path):
        out = tmp_path / "spec.csv"
        prefix = tmp_path / "mode_"
        assert run("spectrum", "--n", 8, "--angles", 12, "--operator",
                   "sirt-s", "--modes", 2, "--modes-prefix", prefix,
                   "--out", out) == 0
        for j in range(2):
            assert (tmp_path / f"mode_{j:03d}.pgm").exists()


class TestBenchCommand:
    def test_smoke_and_determinism(self, tmp_path):
        args = ["bench", "--table", "3", "--n", 16, "--angles", 24,
                "--detectors", 24, "--levels", 2, "--iters-scale", 0.02]
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        assert run(*args, "--outdir", out1) == 0
        assert run(*args, "--outdir", out2) == 0

        def numerical_rows(path):
            with open(path / "table3.csv") as fh:
                rows = list(csv.reader(fh))
            # drop the wall-clock column, keep everything else verbatim
            return [[c for i, c in enumerate(r) if i != 2] for r in rows]

        assert numerical_rows(out1) == numerical_rows(out2)

    def test_table1_noise_free(self, tmp_path):
        assert run("bench", "--table", "1", "--n", 16, "--angles", 24,
                   "--detectors", 24, "--levels", 2, "--iters-scale", 0.02,
                   "--outdir", tmp_path) == 0
        with open(tmp_path / "table1.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["solver"] for r in rows] == ["sirt", "bicgstab",
                                               "wmg-bicgstab"]
        manifest = (tmp_path / "table1.csv.manifest").read_text()
        assert "noise=0.0" in manifest
