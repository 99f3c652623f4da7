"""CLI surface tests for the bench entry point."""

from __future__ import annotations

import pytest

from flowplane.cli import bench_main


class TestBenchCli:
    def test_rt_subcommand(self, tmp_path, capsys):
        code = bench_main(
            [
                "rt",
                "--modes",
                "internal",
                "--count",
                "3",
                "--warmup",
                "1",
                "--topology",
                "linear:2",
                "--ping-interval-ms",
                "1",
                "--out",
                str(tmp_path),
            ]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "rt internal" in out
        assert (tmp_path / "rt-summary.csv").exists()

    def test_tp_subcommand(self, tmp_path, capsys):
        code = bench_main(
            [
                "tp",
                "--modes",
                "internal",
                "--conns",
                "1",
                "--duration",
                "0.5",
                "--install",
                "direct",
                "--topology",
                "linear:2",
                "--out",
                str(tmp_path),
            ]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "tp internal" in out
        assert (tmp_path / "tp-summary.csv").exists()

    def test_unknown_mode_rejected(self):
        with pytest.raises(SystemExit):
            bench_main(["rt", "--modes", "quantum"])

    def test_unknown_install_rejected(self):
        with pytest.raises(SystemExit):
            bench_main(["tp", "--install", "telepathy"])

    def test_subcommand_required(self):
        with pytest.raises(SystemExit):
            bench_main([])

    def test_rt_ordering_note_on_summary(self, capsys):
        code = bench_main(
            [
                "rt",
                "--modes",
                "internal,p2p",
                "--count",
                "4",
                "--warmup",
                "1",
                "--topology",
                "linear:2",
                "--ping-interval-ms",
                "1",
            ]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "rt ordering" in out
        assert "internal < p2p" in out
