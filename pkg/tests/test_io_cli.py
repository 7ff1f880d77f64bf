"""Kernel file format, experiment configs, report round trips, and the CLI."""

import json
import struct

import numpy as np
import pytest

from ridgerisk import (
    ExperimentConfig,
    GramMatrix,
    InputError,
    LabelMatrix,
    LambdaGridSpec,
    center_labels,
    main,
    read_kernel,
    read_report,
    run_experiment,
    write_kernel,
)
from ridgerisk.io_cli import (
    _ABORT_PREFIX,
    EXIT_INPUT,
    EXIT_OK,
    PopulationSpec,
)


def _sample_kernel(seed=0, n=6, p=9):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, p))
    return GramMatrix(a @ a.T, n), LabelMatrix(rng.standard_normal(n))


def _small_config(out=None, seeds=(0,)):
    return ExperimentConfig(
        n_grid=(16, 24),
        seeds=seeds,
        lambda0=LambdaGridSpec(1e-3, 1.0, 4),
        population=PopulationSpec(p=64, gamma=0.5, delta=0.2, sigma2=0.1),
        holdout=200.0,
        output_path=out,
    )


class TestKernelFile:
    def test_round_trip_bit_exact(self, tmp_path):
        gram, labels = _sample_kernel()
        path = str(tmp_path / "k.krx")
        write_kernel(path, gram, labels)
        gram2, labels2 = read_kernel(path)
        assert np.array_equal(gram.entries, gram2.entries)
        assert np.array_equal(labels.values, labels2.values)
        assert gram2.n == gram.n

    def test_matrix_payload_is_little_endian_float64(self, tmp_path):
        gram, labels = _sample_kernel()
        path = str(tmp_path / "k.krx")
        write_kernel(path, gram, labels)
        raw = open(path, "rb").read()
        assert raw[:4] == b"KRMX"
        # header is magic + u32 version + u64 n + u64 label columns
        n = gram.n
        assert len(raw) == 24 + 8 * (n * n + n)

    def _corrupt(self, tmp_path, mutate):
        gram, labels = _sample_kernel()
        path = str(tmp_path / "k.krx")
        write_kernel(path, gram, labels)
        raw = bytearray(open(path, "rb").read())
        data = mutate(raw)
        bad = str(tmp_path / "bad.krx")
        open(bad, "wb").write(bytes(data))
        return bad

    def test_bad_magic_rejected(self, tmp_path):
        bad = self._corrupt(tmp_path, lambda raw: b"XXXX" + bytes(raw[4:]))
        with pytest.raises(InputError, match="magic"):
            read_kernel(bad)

    def test_unknown_version_rejected(self, tmp_path):
        def mutate(raw):
            return bytes(raw[:4]) + (99).to_bytes(4, "little") + bytes(raw[8:])

        with pytest.raises(InputError, match="version"):
            read_kernel(self._corrupt(tmp_path, mutate))

    def test_truncated_payload_rejected(self, tmp_path):
        bad = self._corrupt(tmp_path, lambda raw: bytes(raw[:-8]))
        with pytest.raises(InputError, match="length"):
            read_kernel(bad)

    def test_asymmetric_payload_rejected(self, tmp_path):
        def mutate(raw):
            # bump entry (0, 1) only, leaving (1, 0) in place
            off = 24 + 8
            (val,) = struct.unpack_from("<d", raw, off)
            struct.pack_into("<d", raw, off, val + 1.0)
            return raw

        with pytest.raises(InputError, match="asymmetry"):
            read_kernel(self._corrupt(tmp_path, mutate))

    def test_nonfinite_payload_rejected(self, tmp_path):
        def mutate(raw):
            struct.pack_into("<d", raw, 24, float("nan"))
            return raw

        with pytest.raises(InputError, match="non-finite"):
            read_kernel(self._corrupt(tmp_path, mutate))


class TestCenterLabels:
    def test_removes_mean_and_sets_flag(self):
        y = center_labels(LabelMatrix(np.array([1.0, 2.0, 4.0])))
        assert float(np.mean(y.values)) == pytest.approx(0.0, abs=1e-15)
        assert y.centered

    def test_idempotent(self):
        once = center_labels(LabelMatrix(np.array([1.0, 2.0, 4.0])))
        twice = center_labels(once)
        assert np.array_equal(once.values, twice.values)


class TestExperimentConfig:
    def test_json_round_trip(self):
        cfg = _small_config(out="/tmp/report.csv", seeds=(0, 1))
        assert ExperimentConfig.from_json(cfg.to_json()) == cfg

    def test_dict_round_trip(self):
        cfg = _small_config()
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_keys_rejected(self):
        with pytest.raises(InputError, match="unknown config keys"):
            ExperimentConfig.from_json('{"n_grid": [4], "bogus": 1}')

    def test_exactly_one_data_source(self):
        with pytest.raises(InputError, match="exactly one"):
            ExperimentConfig(
                n_grid=(16,), population=PopulationSpec(), kernel_path="k.krx"
            )
        with pytest.raises(InputError, match="exactly one"):
            ExperimentConfig(n_grid=(16,))

    def test_hash_stable_across_instances(self):
        assert _small_config().config_hash() == _small_config().config_hash()

    def test_hash_ignores_output_path(self):
        a = _small_config(out="/tmp/a.csv")
        b = _small_config(out="/tmp/b.csv")
        assert a.config_hash() == b.config_hash()

    def test_hash_tracks_semantic_fields(self):
        assert _small_config(seeds=(0,)).config_hash() != _small_config(
            seeds=(0, 1)
        ).config_hash()


class TestRunExperiment:
    def test_deterministic_output_bytes(self, tmp_path):
        pa, pb = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        run_experiment(_small_config(out=pa))
        run_experiment(_small_config(out=pb))
        assert open(pa, "rb").read() == open(pb, "rb").read()

    def test_result_shape(self, tmp_path):
        cfg = _small_config(out=str(tmp_path / "r.csv"))
        result = run_experiment(cfg)
        assert result.mode == "synthetic"
        assert result.config_hash == cfg.config_hash()
        # two sample counts, one seed, four grid points
        assert len(result.report.rows) == 8

    def test_report_round_trip(self, tmp_path):
        path = str(tmp_path / "r.csv")
        cfg = _small_config(out=path)
        result = run_experiment(cfg)
        report, config_hash, mode = read_report(path)
        assert config_hash == cfg.config_hash()
        assert mode == "synthetic"
        assert len(report.rows) == len(result.report.rows)
        for got, want in zip(report.rows, result.report.rows):
            assert got.n == want.n
            assert got.lam == want.lam
            assert got.r_emp == want.r_emp

    def test_rerun_same_config_overwrites(self, tmp_path):
        path = str(tmp_path / "r.csv")
        run_experiment(_small_config(out=path))
        run_experiment(_small_config(out=path))

    def test_conflicting_config_refuses_overwrite(self, tmp_path):
        path = str(tmp_path / "r.csv")
        run_experiment(_small_config(out=path))
        with pytest.raises(InputError, match="different config"):
            run_experiment(_small_config(out=path, seeds=(0, 1)))

    def test_abort_marker_rejected_on_read(self, tmp_path):
        path = str(tmp_path / "r.csv")
        run_experiment(_small_config(out=path))
        lines = open(path).read().splitlines()
        lines.insert(1, _ABORT_PREFIX + " solver stalled at n=16")
        marked = str(tmp_path / "aborted.csv")
        open(marked, "w").write("\n".join(lines) + "\n")
        with pytest.raises(InputError, match="aborted"):
            read_report(marked)

    def test_foreign_file_rejected_on_read(self, tmp_path):
        path = str(tmp_path / "other.csv")
        open(path, "w").write("n,lambda\n1,2\n")
        with pytest.raises(InputError, match="not a ridgerisk report"):
            read_report(path)


class TestCLI:
    def _synth_args(self, out=None):
        args = [
            "synth",
            "--p",
            "64",
            "--n-grid",
            "16,24",
            "--lambda-min",
            "1e-3",
            "--lambda-max",
            "1.0",
            "--lambda-count",
            "4",
            "--holdout",
            "200",
            "--sigma2",
            "0.1",
        ]
        if out:
            args += ["--out", out]
        return args

    def test_synth_writes_report(self, tmp_path):
        out = str(tmp_path / "synth.csv")
        assert main(self._synth_args(out)) == EXIT_OK
        report, _, mode = read_report(out)
        assert mode == "synthetic"
        assert len(report.rows) == 8

    def test_synth_prints_to_stdout_without_out(self, capsys):
        assert main(self._synth_args()) == EXIT_OK
        captured = capsys.readouterr().out
        assert captured.startswith("# ridgerisk-report v1")
        assert "n,lambda0,lambda,seed" in captured

    def test_predict_on_kernel_file(self, tmp_path):
        gram, labels = _sample_kernel(n=12, p=20)
        kpath = str(tmp_path / "k.krx")
        write_kernel(kpath, gram, labels)
        out = str(tmp_path / "pred.csv")
        # an n-grid entry plus the holdout block must fit inside the kernel
        code = main(
            [
                "predict",
                "--kernel",
                kpath,
                "--n-grid",
                "8",
                "--holdout",
                "4",
                "--lambda-count",
                "3",
                "--out",
                out,
            ]
        )
        assert code == EXIT_OK
        report, _, mode = read_report(out)
        assert mode == "kernel"
        assert len(report.rows) == 3
        # kernel mode has no population to compare against
        assert all(r.r_omni is None for r in report.rows)

    def test_missing_kernel_is_input_error(self, tmp_path, capsys):
        code = main(
            ["predict", "--kernel", str(tmp_path / "absent.krx"), "--out", "x.csv"]
        )
        assert code == EXIT_INPUT
        assert "input error" in capsys.readouterr().err

    def test_corrupt_kernel_is_input_error(self, tmp_path, capsys):
        gram, labels = _sample_kernel()
        kpath = str(tmp_path / "k.krx")
        write_kernel(kpath, gram, labels)
        raw = bytearray(open(kpath, "rb").read())
        raw[:4] = b"XXXX"
        open(kpath, "wb").write(bytes(raw))
        assert main(["predict", "--kernel", kpath]) == EXIT_INPUT
        assert "magic" in capsys.readouterr().err

    def test_invalid_population_is_input_error(self, capsys):
        code = main(["synth", "--p", "16", "--n-grid", "8", "--sigma2", "1.5"])
        assert code == EXIT_INPUT
        assert "input error" in capsys.readouterr().err

    def test_unknown_subcommand_exits_via_argparse(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])

    def test_config_file_drives_run(self, tmp_path):
        cfg = {
            "n_grid": [8],
            "seeds": [7],
            "population": {"p": 16, "gamma": 0.5, "delta": 0.2, "sigma2": 0.0},
            "lambda0": {"min": 1e-3, "max": 1.0, "count": 3},
            "holdout": 50.0,
        }
        cpath = str(tmp_path / "cfg.json")
        open(cpath, "w").write(json.dumps(cfg))
        out = str(tmp_path / "run.csv")
        assert main(["synth", "--config", cpath, "--out", out]) == EXIT_OK
        report, _, _ = read_report(out)
        assert {r.seed for r in report.rows} == {7}

    def test_explicit_flag_overrides_config(self, tmp_path):
        cfg = {
            "n_grid": [8],
            "seeds": [7],
            "population": {"p": 16, "gamma": 0.5, "delta": 0.2, "sigma2": 0.0},
            "lambda0": {"min": 1e-3, "max": 1.0, "count": 3},
            "holdout": 50.0,
        }
        cpath = str(tmp_path / "cfg.json")
        open(cpath, "w").write(json.dumps(cfg))
        out = str(tmp_path / "run.csv")
        assert main(["synth", "--config", cpath, "--seed", "9", "--out", out]) == EXIT_OK
        report, _, _ = read_report(out)
        assert {r.seed for r in report.rows} == {9}

    def test_scaling_reports_exponents(self, capsys):
        code = main(
            [
                "scaling",
                "--p",
                "64",
                "--n-grid",
                "16,24,32,48",
                "--lambda-min",
                "1e-4",
                "--lambda-max",
                "1.0",
                "--lambda-count",
                "12",
                "--holdout",
                "100",
                "--seed",
                "0",
            ]
        )
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        for key in ("gamma_hat", "delta_hat", "alpha_hat", "alpha_observed"):
            assert key in payload
        assert payload["alpha_hat"] == pytest.approx(
            payload["gamma_hat"] + payload["delta_hat"], rel=1e-12
        )

    def test_mpcheck_reports_coincidence(self, capsys):
        code = main(
            [
                "mpcheck",
                "--p",
                "64",
                "--n-grid",
                "16,24",
                "--lambda-count",
                "5",
                "--holdout",
                "100",
            ]
        )
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["coincidence"] >= 0.0
        assert payload["n_grid"] == [16, 24]

    def test_baselines_reports_correlations(self, capsys):
        code = main(
            [
                "baselines",
                "--p",
                "64",
                "--n-grid",
                "16,24",
                "--lambda-count",
                "5",
                "--holdout",
                "200",
            ]
        )
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert "correlations_all_rows" in payload
        assert set(payload["correlations_all_rows"]) >= {"gcv", "r_norm"}
