"""Command-line behavior: output shapes, determinism, exit codes."""

import json

import pytest

import coinfactory as cf
from coinfactory.cli import main


def run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestZeta:
    def test_bracket_holds_value(self, capsys):
        code, out, _ = run(capsys, ["zeta", "--lam", "2.0", "--start", "1"])
        assert code == 0
        data = json.loads(out)
        assert data["lo"] <= data["value"] <= data["hi"]
        assert data["value"] == pytest.approx(1.6449340668482264, abs=1e-10)

    def test_width_respects_tolerance(self, capsys):
        code, out, _ = run(
            capsys, ["zeta", "--lam", "1.5", "--start", "11", "--zeta-tol", "1e-10"]
        )
        assert code == 0
        data = json.loads(out)
        assert data["width"] <= 2e-10


class TestEstimate:
    ARGS = ["estimate", "--preset", "quad", "--x", "0.3", "--reps", "40", "--seed", "7"]

    def test_jsonl_shape(self, capsys):
        code, out, _ = run(capsys, self.ARGS)
        assert code == 0
        lines = out.strip().split("\n")
        assert len(lines) == 42
        head = json.loads(lines[0])
        assert head["record"] == "settings"
        assert head["preset"] == "quad" and head["reps"] == 40
        assert "workers" not in head
        draws = [json.loads(line) for line in lines[1:-1]]
        assert all(d["record"] == "draw" for d in draws)
        assert [d["rep"] for d in draws] == list(range(40))
        assert all(d["S"] <= d["L"] for d in draws)
        assert all(d["psi"] >= 0 for d in draws)
        tail = json.loads(lines[-1])
        assert tail["record"] == "summary"
        assert tail["reps"] == 40 and tail["cap_hits"] == 0

    def test_csv_shape(self, capsys):
        code, out, _ = run(capsys, self.ARGS + ["--format", "csv"])
        assert code == 0
        lines = out.strip().split("\n")
        body = [l for l in lines if not l.startswith("#")]
        assert body[0] == "rep,L,S,psi"
        assert len(body) == 41
        footer = [l for l in lines if l.startswith("# mean")]
        assert len(footer) == 1

    def test_byte_identity_across_runs(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert main(self.ARGS + ["--out", str(a)]) == 0
        assert main(self.ARGS + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_byte_identity_across_worker_counts(self, tmp_path):
        a, b = tmp_path / "w1.jsonl", tmp_path / "w4.jsonl"
        base = ["estimate", "--preset", "lin", "--x", "0.6", "--reps", "120",
                "--seed", "3"]
        assert main(base + ["--workers", "1", "--out", str(a)]) == 0
        assert main(base + ["--workers", "4", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_start_override_validated(self, capsys):
        code, _, err = run(capsys, ["estimate", "--preset", "quad", "--start", "1"])
        assert code == 2
        assert "start" in err


class TestFactory:
    def test_bits_present(self, capsys):
        code, out, _ = run(
            capsys,
            ["factory", "--preset", "lin", "--x", "0.3", "--flips", "30", "--seed", "1"],
        )
        assert code == 0
        lines = out.strip().split("\n")
        draws = [json.loads(l) for l in lines[1:-1]]
        assert all(d["bit"] in (0, 1) for d in draws)
        tail = json.loads(lines[-1])
        assert 0.0 <= tail["bit_mean"] <= 1.0
        assert "bit_se" in tail

    def test_one_sided_scheme_rejected(self, capsys):
        code, _, err = run(
            capsys, ["factory", "--preset", "quad", "--x", "0.3", "--flips", "5"]
        )
        assert code == 2
        assert "certified on both sides" in err


class TestVerify:
    def test_preset_passes(self, capsys):
        code, out, _ = run(capsys, ["verify", "--preset", "quad", "--n-max", "6"])
        assert code == 0
        assert "all checks passed" in out
        assert "[pass]" in out and "[FAIL]" not in out

    def test_json_mode(self, capsys):
        code, out, _ = run(
            capsys, ["verify", "--preset", "lin", "--n-max", "5", "--json"]
        )
        assert code == 0
        reports = [json.loads(l) for l in out.strip().split("\n")]
        assert all(r["passed"] for r in reports)
        subjects = {r["subject"] for r in reports}
        assert any(s.startswith("scheme:") for s in subjects)

    def test_corrupted_table_fails(self, capsys, tmp_path, quad_scheme):
        path = tmp_path / "quad.tbl"
        cf.save_coefficient_table(quad_scheme, path, n_max=4)
        lines = path.read_text().splitlines()
        out_lines = []
        for line in lines:
            parts = line.split()
            if len(parts) == 4 and parts[0] == "3" and parts[1] == "1":
                parts[2] = parts[3]
                out_lines.append(" ".join(parts))
            else:
                out_lines.append(line)
        path.write_text("\n".join(out_lines) + "\n")
        code, out, _ = run(capsys, ["verify", "--table", str(path)])
        assert code == 1
        assert "CHECKS FAILED" in out

    def test_good_table_passes(self, capsys, tmp_path, quad_scheme):
        path = tmp_path / "quad.tbl"
        cf.save_coefficient_table(quad_scheme, path, n_max=5)
        code, out, _ = run(capsys, ["verify", "--table", str(path)])
        assert code == 0


class TestSweep:
    ARGS = [
        "sweep", "--preset", "quad", "--xs", "0.25,0.75", "--lams", "1.5,2.0",
        "--reps", "25", "--seed", "2",
    ]

    def test_cell_grid(self, capsys):
        code, out, _ = run(capsys, self.ARGS)
        assert code == 0
        lines = out.strip().split("\n")
        cells = [json.loads(l) for l in lines[1:]]
        assert len(cells) == 4
        assert {(c["x"], c["lam"]) for c in cells} == {
            (0.25, 1.5), (0.25, 2.0), (0.75, 1.5), (0.75, 2.0)
        }
        assert all(c["min_psi"] >= 0 for c in cells)

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(self.ARGS + ["--format", "csv", "--out", str(a)]) == 0
        assert main(self.ARGS + ["--format", "csv", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestBracket:
    def test_contains_target(self, capsys):
        code, out, _ = run(
            capsys,
            ["bracket", "--preset", "quad", "--x-exact", "1/2", "--ell-max", "40"],
        )
        assert code == 0
        data = json.loads(out)
        assert data["contains_target"] is True
        assert data["lo"] <= data["target"] <= data["hi"]
        assert data["x"] == "1/2"

    def test_table_rejected(self, capsys, tmp_path, quad_scheme):
        path = tmp_path / "quad.tbl"
        cf.save_coefficient_table(quad_scheme, path, n_max=4)
        code, _, err = run(capsys, ["bracket", "--table", str(path)])
        assert code == 2
        assert "table" in err


class TestConfigFile:
    def test_file_supplies_defaults_flags_override(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("preset = lin\nx = 0.9\nreps = 10\nseed = 5\n")
        code, out, _ = run(capsys, ["estimate", "--config", str(cfg), "--x", "0.2"])
        assert code == 0
        head = json.loads(out.split("\n", 1)[0])
        assert head["preset"] == "lin"
        assert head["x"] == 0.2  # flag wins
        assert head["reps"] == 10

    def test_unknown_key(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("bogus = 1\n")
        code, _, err = run(capsys, ["estimate", "--config", str(cfg)])
        assert code == 2
        assert "unknown setting" in err

    def test_comments_allowed(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# run settings\nreps = 8   # small\n\nseed = 1\n")
        code, out, _ = run(capsys, ["estimate", "--config", str(cfg)])
        assert code == 0
        assert json.loads(out.strip().split("\n")[-1])["reps"] == 8


class TestTopLevel:
    def test_missing_subcommand(self):
        with pytest.raises(SystemExit):
            main([])

    def test_version_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0

    def test_missing_table_file(self, capsys):
        code, _, err = run(capsys, ["verify", "--table", "/nonexistent/x.tbl"])
        assert code == 2
