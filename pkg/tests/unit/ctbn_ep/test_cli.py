# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

import json

import pytest
from click.testing import CliRunner

from ctbn_ep.cli import NOT_CONVERGED, cli


@pytest.fixture
def runner():
    try:
        return CliRunner(mix_stderr=False)
    except TypeError:
        # click 8.2 dropped the keyword and always keeps stderr apart
        return CliRunner()


@pytest.fixture
def query_file(tmp_path):
    path = tmp_path / "query.json"
    path.write_text(json.dumps({"variables": ["A"], "times": [1.0]}))
    return str(path)


class TestValidate:
    def test_valid(self, runner, chain_files):
        result = runner.invoke(cli, ["validate", chain_files["model"]])

        assert result.exit_code == 0
        assert "valid, 4 variable(s), 16 joint state(s)" in result.stdout

    def test_invalid(self, runner, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text(json.dumps({"variables": [{"name": "A"}]}))

        result = runner.invoke(cli, ["validate", str(path)])

        assert result.exit_code == 1
        assert "[schema]" in result.stderr

    def test_missing_file(self, runner, tmp_path):
        result = runner.invoke(cli, ["validate", str(tmp_path / "none")])

        assert result.exit_code == 2


class TestQueries:
    def test_exact_query(self, runner, chain_files, query_file):
        result = runner.invoke(
            cli,
            [
                "exact",
                "query",
                chain_files["model"],
                chain_files["evidence"],
                query_file,
            ],
        )

        assert result.exit_code == 0
        report = json.loads(result.stdout)
        assert report["engine"] == "exact"
        assert report["probes"][0]["distribution"]["A=a1"] == pytest.approx(
            0.738, abs=1e-3
        )

    def test_ep_query(self, runner, chain_files, query_file):
        result = runner.invoke(
            cli,
            [
                "ep",
                "query",
                chain_files["model"],
                chain_files["evidence"],
                query_file,
                "--topology",
                chain_files["topology"],
            ],
        )

        assert result.exit_code == 0
        report = json.loads(result.stdout)
        assert report["converged"] is True
        assert report["probes"][0]["distribution"]["A=a1"] == pytest.approx(
            0.703, abs=0.005
        )

    def test_ep_query_not_converged(self, runner, chain_files, query_file):
        result = runner.invoke(
            cli,
            [
                "ep",
                "query",
                chain_files["model"],
                chain_files["evidence"],
                query_file,
                "--max-iters",
                "1",
            ],
        )

        assert result.exit_code == NOT_CONVERGED
        assert json.loads(result.stdout)["converged"] is False

    def test_ep_query_text(self, runner, chain_files, query_file, tmp_path):
        output = tmp_path / "report.txt"

        result = runner.invoke(
            cli,
            [
                "ep",
                "query",
                chain_files["model"],
                chain_files["evidence"],
                query_file,
                "--format",
                "text",
                "--output",
                str(output),
            ],
        )

        assert result.exit_code == 0
        assert result.stdout == ""
        assert "A=a1" in output.read_text()

    def test_ep_stats(self, runner, chain_files):
        result = runner.invoke(
            cli,
            ["ep", "stats", chain_files["model"], chain_files["evidence"]],
        )

        assert result.exit_code == 0
        assert len(json.loads(result.stdout)["clusters"]) == 3

    def test_ep_stats_bad_segment(self, runner, chain_files):
        result = runner.invoke(
            cli,
            [
                "ep",
                "stats",
                chain_files["model"],
                chain_files["evidence"],
                "--segment",
                "5",
            ],
        )

        assert result.exit_code == 1
        assert "out of range" in result.stderr

    def test_impossible_evidence(self, runner, chain_files, tmp_path):
        evidence = tmp_path / "impossible.json"
        evidence.write_text(
            json.dumps(
                {
                    "horizon": [0.0, 1.0],
                    "points": [{"var": "D", "value": "d2", "t": 0.0}],
                }
            )
        )
        query = tmp_path / "empty-query.json"
        query.write_text("{}")

        result = runner.invoke(
            cli,
            [
                "exact",
                "query",
                chain_files["model"],
                str(evidence),
                str(query),
            ],
        )

        assert result.exit_code == 2
        assert "Error:" in result.stderr


class TestSample:
    def test_sample(self, runner, chain_files):
        result = runner.invoke(
            cli,
            [
                "sample",
                chain_files["model"],
                "--n",
                "3",
                "--t-end",
                "2.0",
                "--seed",
                "9",
            ],
        )

        assert result.exit_code == 0
        document = json.loads(result.stdout)
        assert document["rng"] == "PCG64"
        assert document["seed"] == 9
        assert len(document["trajectories"]) == 3

    def test_t_end_required(self, runner, chain_files):
        result = runner.invoke(cli, ["sample", chain_files["model"]])

        assert result.exit_code == 2


class TestCompare:
    def test_compare(self, runner, chain_files):
        result = runner.invoke(
            cli,
            [
                "compare",
                chain_files["model"],
                chain_files["evidence"],
                "--points",
                "11",
            ],
        )

        assert result.exit_code == 0
        report = json.loads(result.stdout)
        assert len(report["points"]) == 11
        assert report["converged"] is True
        assert 0 <= report["average_kl"] < 0.05
