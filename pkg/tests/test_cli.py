import numpy as np
import pytest

from bankcontract.cli import (
    EXIT_CONDITION,
    EXIT_IO,
    EXIT_OK,
    EXIT_STAT,
    ConfigError,
    main,
    parse_config,
    read_plotdata,
    sha256_file,
)

REF = "I=3\nmu=1\nB=0.1\nepsilon=0.5\nr=0.05\nalpha=0.25,0.25,0.25\n"


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_minimal_single_loan(tmp_path):
    cfg = parse_config(write(tmp_path, "I=1\nmu=1\nB=0.1\nepsilon=0.5\nr=0.05\nalpha=0.25\n"))
    assert cfg.params.alpha == (0.25,)
    assert cfg.sim.u0 is None and cfg.sim.n_paths == 100_000 and cfg.sim.seed == 42
    assert cfg.settings.grid_points == 2048


def test_defaults_and_comments(tmp_path):
    cfg = parse_config(write(tmp_path, "# reference pool\n\n" + REF + "seed = 7  # override\n"))
    assert cfg.sim.seed == 7
    assert cfg.settings.quad_tol == 1e-10 and cfg.settings.bisect_tol == 1e-12


def test_shirk_orientation(tmp_path):
    cfg = parse_config(write(tmp_path, REF + "shirk=3,2,1\n"))
    # listed from the full pool down; stored by level j = 1..I
    assert cfg.sim.shirk == (1, 2, 3)


@pytest.mark.parametrize("extra, msg", [
    ("colour=blue\n", "line 7: unknown key 'colour'"),
    ("mu=2\n", "line 7: duplicate key 'mu'"),
    ("just text\n", "line 7: expected key=value"),
    ("seed=abc\n", "line 7: seed must be an integer"),
    ("shirk=1,1\n", "line 7: shirk needs 3"),
])
def test_parse_errors_carry_line(tmp_path, extra, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(write(tmp_path, REF + extra))


def test_alpha_length_error(tmp_path):
    with pytest.raises(ConfigError, match="expected I=3"):
        parse_config(write(tmp_path, REF.replace("0.25,0.25,0.25", "0.25,0.25")))


def test_missing_key(tmp_path):
    with pytest.raises(ConfigError, match="missing required keys: r"):
        parse_config(write(tmp_path, REF.replace("r=0.05\n", "")))


def test_exit_codes(tmp_path, capsys):
    bad_a2 = write(tmp_path, REF.replace("B=0.1", "B=0.45"), "a2.cfg")
    assert main(["check", "--config", str(bad_a2)]) == EXIT_CONDITION
    out = capsys.readouterr().out
    assert "monitoring_efficiency[j=3]" in out and "margin=-" in out
    assert main(["solve", "--config", str(bad_a2)]) == EXIT_CONDITION
    assert main(["check", "--config", str(tmp_path / "missing.cfg")]) == EXIT_IO
    assert main(["check", "--config", str(write(tmp_path, REF + "x=1\n", "x.cfg"))]) == EXIT_IO
    neg = write(tmp_path, REF.replace("mu=1", "mu=-1"), "neg.cfg")
    assert main(["check", "--config", str(neg)]) == EXIT_IO
    assert main(["check", "--config", str(write(tmp_path, REF))]) == EXIT_OK


def test_statistical_failure_exit(tmp_path, capsys, monkeypatch):
    from bankcontract.policy import ContractPolicy

    honest = ContractPolicy.fee_rate
    monkeypatch.setattr(ContractPolicy, "fee_rate", lambda self, j: 2 * honest(self, j))
    code = main(["simulate", "--config", str(write(tmp_path, REF)), "--paths", "20000"])
    assert code == EXIT_STAT
    assert "FAIL" in capsys.readouterr().out


def test_solve_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["solve", "--config", str(write(tmp_path, REF)), "--out", str(out)]) == EXIT_OK
    lines = (out / "values.csv").read_text().splitlines()
    assert lines[0] == "j,u,v,dv_left,dv_right,region"
    rows = [ln.split(",") for ln in lines[1:]]
    hit = [r for r in rows if r[0] == "2" and abs(float(r[1]) - 1.6) < 1e-12]
    assert len(hit) == 1 and abs(float(hit[0][2]) - 6.08) <= 1e-6
    b = (out / "boundaries.csv").read_text().splitlines()
    assert b[0] == "j,b_j,b_j+b_{j-1},gamma_j,vbar_j"
    j2 = [float(x) for x in b[2].split(",")]
    assert j2[1:4] == pytest.approx([0.8, 1.6, 1.6], abs=1e-15)
    assert j2[4] == pytest.approx(5.6154, abs=1e-4)
    manifest = (out / "manifest.txt").read_text()
    assert f"sha256={sha256_file(out / 'values.csv')}" in manifest


def test_single_level_regions(tmp_path):
    cfg = write(tmp_path, "I=1\nmu=1\nB=0.1\nepsilon=0.5\nr=0.05\nalpha=0.25\n")
    main(["export", "--config", str(cfg), "--out", str(tmp_path / "o")])
    rows = (tmp_path / "o" / "values.csv").read_text().splitlines()[1:]
    assert [r.split(",")[-1] for r in rows] == ["linear-low", "linear-high"]
    assert float(rows[1].split(",")[1]) == 0.8


def test_export_round_trip(tmp_path, ref_vf):
    cfg = write(tmp_path, REF)
    main(["export", "--config", str(cfg), "--out", str(tmp_path / "o")])
    levels = read_plotdata(tmp_path / "o")
    for j, lv in levels.items():
        orig = ref_vf.level(j)
        assert np.max(np.abs(lv.value(orig.grid) - orig.values)) <= 1e-9
        mid = 0.5 * (orig.grid[1:-1] + orig.grid[2:])
        if mid.size:
                assert np.max(np.abs(lv.value(mid) - orig.value(mid))) <= 1e-12


def test_manifest_reproduces_bytes(tmp_path):
    first = tmp_path / "a"
    second = tmp_path / "b"
    main(["solve", "--config", str(write(tmp_path, REF)), "--out", str(first)])
    main(["solve", "--config", str(first / "manifest.txt"), "--out", str(second)])
    for name in ("values.csv", "boundaries.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_simulate_events_and_workers(tmp_path, capsys):
    cfg = write(tmp_path, REF)
    outs = []
    for workers in (1, 2):
        main(["simulate", "--config", str(cfg), "--paths", "20000", "--workers", str(workers),
              "--events", "3", "--out", str(tmp_path / f"w{workers}")])
        outs.append(capsys.readouterr().out.replace(f"w{workers}", "w"))
    assert outs[0] == outs[1]
    assert (tmp_path / "w1" / "events.csv").read_bytes() == (tmp_path / "w2" / "events.csv").read_bytes()


def test_ictest_reports_profiles(tmp_path, capsys):
    cfg = write(tmp_path, REF + "shirk=1,1,1\n")
    code = main(["ictest", "--config", str(cfg), "--paths", "20000"])
    out = capsys.readouterr().out
    assert "profile=configured shirk(k_I..k_1)=1,1,1" in out
    assert "profile=full shirk(k_I..k_1)=3,2,1" in out
    assert code == EXIT_OK
