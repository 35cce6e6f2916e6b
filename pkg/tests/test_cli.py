import json

import pytest

from spikelab import cli


def test_green_command(capsys):
    rc = cli.main(["green", "--domain", "disk,r=1", "--h", "1/32", "--source", "0.3,0.0"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["R"] == pytest.approx(0.0150100, abs=2e-4)
    assert len(out["grad_R"]) == 2 and len(out["hess_R"]) == 2


def test_kr_command(capsys):
    rc = cli.main(["kr", "--domain", "disk,r=1", "--h", "1/32", "--start", "0.3,0.2"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["points"][0][0]) < 0.1
    assert out["classification"] == "minimum"
    assert out["nondeg_margin"] == pytest.approx(0.3183, rel=0.1)


def test_liouville_command(capsys, tmp_path):
    dump = tmp_path / "w0.csv"
    rc = cli.main(["liouville", "--verify", "--dump-w0", str(dump)])
    assert rc == 0
    lines = dump.read_text().splitlines()
    assert lines[0] == "r,w0,w0_prime"
    assert len(lines) > 1000
    out = capsys.readouterr().out
    payload = json.loads(out[out.index("{"):])
    assert payload["mass"]["rel_err"] < 1e-10


def test_solve_command(capsys):
    rc = cli.main(["solve", "--domain", "disk,r=1", "--h", "1/48", "--p", "10"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["spikes"][0]["u_max"] == pytest.approx(1.857, rel=2e-2)


def test_sweep_and_pohozaev_commands(tmp_path, capsys):
    branch = tmp_path / "branch.csv"
    rc = cli.main(["sweep", "--domain", "disk,r=1", "--h", "1/48", "--p", "8,10",
                   "--out", str(branch)])
    assert rc == 0
    header = branch.read_text().splitlines()[0]
    assert header == "p,j,x_j,y_j,u_max_j,eps_j,C_j,energy,residual"
    rc = cli.main(["pohozaev", "--domain", "disk,r=1", "--h", "1/48",
                   "--branch", str(branch), "--out", str(tmp_path / "poho.csv")])
    assert rc == 0
    rows = (tmp_path / "poho.csv").read_text().splitlines()
    assert rows[0].startswith("p,j,theta,q1_residual")
    assert len(rows) == 3


def test_domain_parse_errors():
    with pytest.raises(Exception):
        cli.parse_domain("disk,r=-1")
