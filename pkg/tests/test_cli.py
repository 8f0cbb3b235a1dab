from click.testing import CliRunner

from groundseg.cli import main
from tests.conftest import FIXTURES, MIB_PATH, MISSION_PATH


def run(*argv):
    return CliRunner().invoke(main, list(argv))


def test_mib_validate_counts():
    r = run("mib", "validate", str(MIB_PATH))
    assert r.exit_code == 0
    assert "28 open, 12 restricted" in r.output
    assert "15 commands" in r.output


def test_mib_validate_rejects_bad_file(tmp_path):
    bad = tmp_path / "bad.mib"
    bad.write_text("parameters:\n  - {id: x, name: X, classification: open, "
                   "unit: '', calibration: {gain: 0, offset: 0}, source: space}\n"
                   "commands: []\n")
    r = run("mib", "validate", str(bad))
    assert r.exit_code != 0


def test_mib_list_limits():
    r = run("mib", "list-limits", str(MIB_PATH))
    assert r.exit_code == 0
    assert "sat.obc.temp" in r.output


def test_proc_validate():
    r = run("proc", "validate", "--mib", str(MIB_PATH),
            str(FIXTURES) + "/procedures/safe_mute.yaml")
    assert r.exit_code == 0 and "SAFE_MUTE" in r.output


def test_proc_run_dispatches():
    r = run("proc", "run", "--config", str(MISSION_PATH), "SAFE_MUTE")
    assert r.exit_code == 0, r.output
    assert "MUTE_WT_TRANSPONDERS" in r.output
    assert "succeeded" in r.output


def test_proc_run_with_args():
    r = run("proc", "run", "--config", str(MISSION_PATH),
            "GERE_RECONF", "--arg", "filter=5")
    assert r.exit_code == 0, r.output
    assert "GERE_CONFIG" in r.output


def test_plan_show():
    r = run("plan", "show", "--config", str(MISSION_PATH), "--run-s", "1")
    assert r.exit_code == 0
    assert "version" in r.output
