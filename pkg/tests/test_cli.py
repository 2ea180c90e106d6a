import json

import numpy as np
import pytest

from cohmeter.channels import kraus_two_site, propagator_two_site, restrict
from cohmeter.cli import main
from cohmeter.formats import kraus_to_json, state_to_json
from cohmeter.hilbert import ExcitationState


def write(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def run(capsys, argv):
    code = main(argv)
    return code, capsys.readouterr()


def test_measure_localized(tmp_path, capsys):
    f = write(tmp_path / "s.json", state_to_json(ExcitationState.localized(5, 0)))
    code, out = run(capsys, ["measure", f, "--restarts", "2"])
    assert code == 0
    assert [r["value"] for r in json.loads(out.out)] == [0.0] * 4


def test_measure_w_state(tmp_path, capsys):
    f = write(tmp_path / "w.json", state_to_json(ExcitationState.w_state(5)))
    code, out = run(capsys, ["measure", f, "--k", "2,3,4,5", "--restarts", "4", "--out", str(tmp_path / "o")])
    assert code == 0
    values = [r["value"] for r in json.loads(out.out)]
    assert all(v > 0 for v in values)
    assert all(a >= b - 1e-6 for a, b in zip(values, values[1:]))
    assert (tmp_path / "o" / "measure.json").exists()


def test_malformed_input_exit_2(tmp_path, capsys):
    f = tmp_path / "bad.json"
    f.write_text("{oops")
    assert run(capsys, ["measure", str(f)])[0] == 2
    assert run(capsys, ["measure", str(tmp_path / "missing.json")])[0] == 2
    ok = write(tmp_path / "s.json", state_to_json(ExcitationState.w_state(3)))
    assert run(capsys, ["measure", ok, "--k", "two"])[0] == 2


def test_invariant_violation_exit_3(tmp_path, capsys):
    f = write(tmp_path / "s.json", {"n": 2, "amplitudes": [[1, 0], [1, 0]]})
    assert run(capsys, ["measure", f])[0] == 3
    ok = write(tmp_path / "w.json", state_to_json(ExcitationState.w_state(3)))
    assert run(capsys, ["measure", ok, "--k", "4"])[0] == 3


def test_bad_flag_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["measure"])
    assert exc.value.code == 2


def test_check_channel_verdicts(tmp_path, capsys):
    f = write(tmp_path / "k.json", kraus_to_json(2, kraus_two_site(0.5).matrices))
    code, out = run(capsys, ["check-channel", f])
    report = json.loads(out.out)
    assert code == 0 and report["verdict"] == "incoherent"

    u = restrict(propagator_two_site(np.pi / 4))
    f = write(tmp_path / "u.json", kraus_to_json(2, [u]))
    code, out = run(capsys, ["check-channel", f])
    assert code == 0 and json.loads(out.out)["verdict"] == "coherent"

    f = write(tmp_path / "p.json", kraus_to_json(2, kraus_two_site(0.5).matrices[:3]))
    code, out = run(capsys, ["check-channel", f])
    assert code == 3 and json.loads(out.out)["verdict"] == "not-trace-preserving"


def test_witness_command(tmp_path, capsys):
    f = write(tmp_path / "w.json", state_to_json(ExcitationState.w_state(3)))
    code, out = run(capsys, ["witness", f, "--k", "3"])
    report = json.loads(out.out)[0]
    assert code == 0 and report["tau"] > 0 and report["support"] == [1, 2, 3]
    f = write(tmp_path / "l.json", state_to_json(ExcitationState.localized(3, 0)))
    assert run(capsys, ["witness", f, "--k", "2"])[0] == 3


def small_config(tmp_path, t_max=0.02):
    cfg = {"n": 3, "lambda": {"uniform": 0.0}, "gamma": {"uniform": 1.0}, "t_max": t_max, "dt": 1e-3,
           "initial": state_to_json(ExcitationState.w_state(3)), "ks": [2, 3], "stride": 10,
           "optimizer": {"restarts": 2, "seed": 1}}
    return write(tmp_path / "run.json", cfg)


def test_evolve_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    code, _ = run(capsys, ["evolve", "--config", small_config(tmp_path), "--out", str(out)])
    assert code == 0
    lines = (out / "series.csv").read_text().splitlines()
    assert lines[0] == "t,q_1,q_2,q_3,IPR,T_2_normalized,T_3_normalized"
    assert len(lines) == 4
    first = lines[1].split(",")
    assert float(first[-1]) == pytest.approx(1.0)
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["w"]) == {"2", "3"} and "peaks" in summary and "final_state" in summary
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 1 and len(manifest["config_sha256"]) == 64
    assert (out / "series.dat").read_text().startswith("# t ")


def test_evolve_reproducible(tmp_path, capsys):
    cfg = small_config(tmp_path)
    run(capsys, ["evolve", "--config", cfg, "--out", str(tmp_path / "a")])
    run(capsys, ["evolve", "--config", cfg, "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "series.csv").read_bytes() == (tmp_path / "b" / "series.csv").read_bytes()


def test_evolve_zero_duration(tmp_path, capsys):
    out = tmp_path / "z"
    code, _ = run(capsys, ["evolve", "--config", small_config(tmp_path), "--t-max", "0", "--out", str(out)])
    assert code == 0
    assert len((out / "series.csv").read_text().splitlines()) == 2


def test_evolve_errors(tmp_path, capsys):
    assert run(capsys, ["evolve"])[0] == 2
    assert run(capsys, ["evolve", "--config", str(tmp_path / "nope.json")])[0] == 2
    bad = write(tmp_path / "bad.json", {"n": 3})
    assert run(capsys, ["evolve", "--config", bad, "--out", str(tmp_path / "o")])[0] == 2
    big = small_config(tmp_path)
    code, _ = run(capsys, ["evolve", "--config", big, "--dt", "5", "--t-max", "10", "--out", str(tmp_path / "o")])
    assert code == 4


def test_bundled_configs_load():
    from cohmeter.cli import _resolve_config, run_config_to_spec
    for name in ["fig1", "fig2"]:
        cfg, _ = _resolve_config(name)
        spec = run_config_to_spec(cfg)
        assert spec.n == 5 and spec.t_max == 3.0
    cfg, _ = _resolve_config("fig1")
    assert np.allclose(run_config_to_spec(cfg).initial.populations, [0.1, 0.2, 0.4, 0.2, 0.1])
