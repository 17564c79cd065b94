import json

import numpy as np
import pytest

from src.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, build_parser, main
from src.spectral import build_setting, generate_data


@pytest.fixture
def data_file(tmp_path):
    data = generate_data(build_setting("identity", 40, 150), 9)
    path = tmp_path / "data.csv"
    np.savetxt(path, data, delimiter=",")
    return path


def test_parser_knows_every_command():
    parser = build_parser()
    for command in ("mp-law", "estimate", "simulate", "risk", "spikes", "eigvec", "que"):
        args = parser.parse_args([command, "--setting", "identity"])
        assert args.command == command
    with pytest.raises(SystemExit):
        parser.parse_args(["mp-law", "--setting", "v"])


def test_mp_law_command(tmp_path, capsys):
    code = main(["mp-law", "--setting", "identity", "--p", "100", "--n", "200", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert (tmp_path / "edges.csv").exists()
    summary = json.loads(capsys.readouterr().out)
    assert summary["q"] == 1
    assert summary["lambda_plus"] == pytest.approx((1 + np.sqrt(0.5)) ** 2, abs=1e-9)


def test_invalid_configuration_exits_with_two(tmp_path):
    assert main(["simulate", "--p", "1", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["simulate", "--setting", "i", "--p", "11", "--n", "40", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["mp-law", "--setting", "custom", "--spectrum", str(tmp_path / "missing.txt"),
                 "--out", str(tmp_path)]) == EXIT_CONFIG


def test_estimate_from_a_data_file(data_file, tmp_path):
    out = tmp_path / "estimate"
    code = main(["estimate", "--data", str(data_file), "--rank", "0", "--loss", "Frobenius",
                 "--setting", "identity", "--p", "40", "--n", "150", "--out", str(out)])
    assert code == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["p"] == 40 and summary["n"] == 150
    assert summary["rank"] == 0
    assert (out / "shrinkers.csv").exists()


def test_oracle_spectrum_needs_a_simulated_setting(data_file, tmp_path):
    code = main(["estimate", "--data", str(data_file), "--method", "oracle", "--setting", "identity",
                 "--p", "40", "--n", "150", "--out", str(tmp_path)])
    assert code == EXIT_CONFIG


def test_numerical_failure_exits_with_three(data_file, tmp_path):
    code = main(["estimate", "--data", str(data_file), "--rank", "40", "--setting", "identity",
                 "--p", "40", "--n", "150", "--out", str(tmp_path)])
    assert code == EXIT_NUMERIC


def test_que_with_a_weights_file(tmp_path, capsys):
    weights = tmp_path / "weights.txt"
    weights.write_text("# first half up, second half down\n" + "\n".join(["0.5"] * 20 + ["-0.5"] * 20) + "\n")
    code = main(["que", "--setting", "identity", "--p", "40", "--n", "120", "--reps", "3",
                 "--weights", str(weights), "--out", str(tmp_path / "que")])
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert 0.0 <= summary["exceedance"] <= 1.0


def test_bad_weights_files_exit_with_two(tmp_path):
    out = str(tmp_path / "que")
    large = tmp_path / "large.txt"
    large.write_text("\n".join(["2.0"] * 40))
    short = tmp_path / "short.txt"
    short.write_text("1.0\n-1.0\n")
    base = ["que", "--setting", "identity", "--p", "40", "--n", "120", "--reps", "2", "--out", out]
    assert main(base + ["--weights", str(large)]) == EXIT_CONFIG
    assert main(base + ["--weights", str(short)]) == EXIT_CONFIG
    assert main(base + ["--weights", str(tmp_path / "missing.txt")]) == EXIT_CONFIG
