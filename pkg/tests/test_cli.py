import json
from pathlib import Path

import pytest

from pilotsim.cli import EXIT_FAIL, EXIT_PASS, EXIT_USAGE, main


def read_csv_body(path: Path) -> str:
    return "".join(l for l in path.read_text().splitlines(keepends=True)
                   if not l.startswith("#"))


class TestTrack:
    def test_square_off_reports_oscillation(self, tmp_path, capsys):
        out = tmp_path / "sq.csv"
        rc = main(["track", "--wave", "square", "--counter-drive", "off",
                   "--dither", "off", "--out", str(out)])
        assert rc == EXIT_PASS
        assert "oscillation detected" in capsys.readouterr().out
        assert out.read_text().splitlines()
        assert read_csv_body(out).splitlines()[0] == "t,target,measured,u_o,u1,u2"

    def test_stair_on_tracks(self, tmp_path, capsys):
        rc = main(["track", "--wave", "stair", "--dither", "on",
                   "--out", str(tmp_path / "st.csv")])
        assert rc == EXIT_PASS
        assert "tracked every step" in capsys.readouterr().out

    def test_same_seed_byte_identical_csv(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert main(["--seed", "7", "track", "--wave", "square",
                         "--counter-drive", "off", "--dither", "off",
                         "--out", str(out)]) == EXIT_PASS
        assert a.read_bytes() == b.read_bytes()

    def test_header_embeds_resolved_config(self, tmp_path):
        out = tmp_path / "sq.csv"
        main(["track", "--wave", "square", "--out", str(out)])
        text = out.read_text()
        assert "# plant.static_friction" in text
        assert "# control.kp" in text


class TestMarkerBench:
    def test_noiseless_zero_error(self, tmp_path, capsys):
        out = tmp_path / "b.csv"
        rc = main(["marker-bench", "--shape", "poly26", "--noise", "0",
                   "--rotations", "1", "--steps", "24", "--out", str(out)])
        assert rc == EXIT_PASS
        body = read_csv_body(out).splitlines()
        assert body[0].startswith("shape,sigma,")
        row = body[1].split(",")
        assert float(row[2]) < 1e-6  # mean rot deg

    def test_geometry_export(self, tmp_path):
        geo = tmp_path / "corners.txt"
        main(["marker-bench", "--shape", "cube6", "--noise", "0",
              "--rotations", "1", "--steps", "8", "--export-geometry", str(geo),
              "--out", str(tmp_path / "x.csv")])
        lines = [l for l in geo.read_text().splitlines() if not l.startswith("#")]
        assert len(lines) == 24  # 6 tags x 4 corners

    def test_bad_noise_value_is_usage_error(self):
        assert main(["marker-bench", "--noise", "lots"]) == EXIT_USAGE


class TestIkAudit:
    def test_passes_with_small_sample(self, capsys):
        rc = main(["ik-audit", "--samples", "500"])
        assert rc == EXIT_PASS
        out = capsys.readouterr().out
        assert "round trip" in out and "unreachable detection: 200/200" in out


class TestScriptReplay:
    def test_reach_demo_then_replay(self, tmp_path, capsys):
        sess = tmp_path / "sess.jsonl"
        rc = main(["script", "--out", str(sess)])
        assert rc == EXIT_PASS
        assert "final EE-to-goal distance" in capsys.readouterr().out
        rc = main(["replay", "--session", str(sess)])
        assert rc == EXIT_PASS
        assert "max state divergence 0.000e+00" in capsys.readouterr().out

    def test_replay_rejects_corruption(self, tmp_path):
        sess = tmp_path / "sess.jsonl"
        main(["script", "--out", str(sess)])
        raw = bytearray(sess.read_bytes())
        raw[len(raw) // 3] ^= 0x02
        sess.write_bytes(bytes(raw))
        with pytest.raises(Exception):
            main(["replay", "--session", str(sess)])

    def test_custom_script_file(self, tmp_path):
        script = tmp_path / "in.jsonl"
        rows = [{"pedals": [0.0, 0.0, 0.0, 0.0], "keys": ["mode_toggle"] if i == 0 else []}
                for i in range(10)]
        script.write_text("\n".join(json.dumps(r) for r in rows))
        out = tmp_path / "out.jsonl"
        rc = main(["script", "--script", str(script), "--out", str(out)])
        assert rc == EXIT_PASS
        from pilotsim.teleop_core import load_session
        log = load_session(out)
        assert len(log) == 10
        assert log.records[1]["mode"] == "walking"


class TestConfigHandling:
    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("plant.warp_drive = 9\n")
        assert main(["--config", str(cfg), "track", "--wave", "stair"]) == EXIT_USAGE

    def test_override_changes_behavior(self, tmp_path, capsys):
        cfg = tmp_path / "stiff.cfg"
        # ten times the stiction: even the dithered loop stalls on the stair
        cfg.write_text("plant.static_friction = 6.75\n")
        rc = main(["--config", str(cfg), "track", "--wave", "stair", "--dither", "on"])
        assert rc == EXIT_FAIL
        assert "FAILED to track" in capsys.readouterr().out

    def test_missing_config_file(self):
        assert main(["--config", "/nope/absent.cfg", "track", "--wave", "stair"]) == EXIT_USAGE

    def test_unknown_subcommand_usage(self):
        assert main(["warp"]) == EXIT_USAGE
