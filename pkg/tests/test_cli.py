import csv
import json

import jsonschema
import pytest

from spinsc.cli import (ConfigError, RunConfig, load_schema, main,
                        parse_config_text)


def _validate(report: dict) -> None:
    jsonschema.validate(report, load_schema(report["schema"]))


def _read_report(path):
    with open(path) as fh:
        report = json.load(fh)
    _validate(report)
    return report


def test_config_text_and_json_equivalent(tmp_path):
    text = "model.h = 1.0\nmodel.gamma_x = 4\nn = [100, 200]\n# comment\n"
    as_json = json.dumps({"model": {"h": 1.0, "gamma_x": 4},
                          "n": [100, 200]})
    assert parse_config_text(text) == parse_config_text(as_json)


def test_config_unknown_key_rejected():
    flat = parse_config_text("task = spectrum\nmodel.h = 1\nn = 5\nbogus = 1")
    with pytest.raises(ConfigError, match="bogus"):
        RunConfig.from_flat(flat)


def test_config_requires_model():
    with pytest.raises(ConfigError, match="model.h"):
        RunConfig.from_flat({"task": "spectrum", "n": 5})


def test_config_rejects_bad_n():
    with pytest.raises(ConfigError):
        RunConfig.from_flat({"task": "spectrum", "model.h": 1, "n": 0})


def test_spectrum_trivial_example(tmp_path):
    # h = 1 free spin at n = 2: levels -1, 0, 1
    rc = main(["spectrum", "--set", "model.h=1", "--n", "2",
               "--out", str(tmp_path)])
    assert rc == 0
    report = _read_report(tmp_path / "spectrum_report.json")
    assert report["spectra"][0]["count"] == 3
    with open(tmp_path / "spectrum_n2.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["energy"]) for r in rows] == [-1.0, 0.0, 1.0]


def test_error_is_machine_readable(tmp_path, capsys):
    rc = main(["spectrum", "--out", str(tmp_path)])
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    jsonschema.validate(err, load_schema("spinsc/error/v1"))
    assert err["error"]["type"] == "config"


def test_byte_identical_reruns(tmp_path):
    for d in ("a", "b"):
        assert main(["spectrum", "--set", "model.h=1",
                     "--set", "model.gamma_x=4", "--set", "model.gamma_y=0.25",
                     "--set", "model.mu=5", "--n", "30",
                     "--out", str(tmp_path / d)]) == 0
    for name in ("spectrum_report.json", "spectrum_n30.csv"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()


def test_classify_heteroclinic_example(tmp_path):
    rc = main(["classify", "--set", "model.h=1", "--set", "model.gamma_x=5",
               "--set", "model.gamma_y=2", "--set", "model.mu=6",
               "--out", str(tmp_path)])
    assert rc == 0
    report = _read_report(tmp_path / "classify_report.json")
    hps = [fp for fp in report["fixed_points"]
           if fp["kind"] == "hyperbolic" and abs(fp["energy"] + 1.25) < 1e-9]
    assert len(hps) == 2


def test_quantize_report_schema(tmp_path):
    rc = main(["quantize", "--set", "model.h=1", "--set", "model.gamma_x=4",
               "--set", "model.gamma_y=0.25", "--set", "model.mu=5",
               "--n", "200", "--set", "window.eta_abs=1.5",
               "--out", str(tmp_path)])
    assert rc == 0
    report = _read_report(tmp_path / "quantize_report.json")
    assert report["eps_c"] == pytest.approx(-1.0)
    assert report["results"][0]["count"] > 0
    with open(tmp_path / "critical_zeros_n200.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == report["results"][0]["count"]


def test_bs_report_schema(tmp_path):
    rc = main(["bs", "--set", "model.h=1", "--set", "model.gamma_x=4",
               "--set", "model.gamma_y=0.25", "--set", "model.mu=5",
               "--n", "100", "--set", "window.e_min=-0.6",
               "--set", "window.e_max=-0.3", "--out", str(tmp_path)])
    assert rc == 0
    report = _read_report(tmp_path / "bs_report.json")
    assert report["results"][0]["count"] > 0


def test_husimi_report_schema(tmp_path):
    rc = main(["husimi", "--set", "model.h=1", "--set", "model.gamma_x=4",
               "--set", "model.gamma_y=0.25", "--set", "model.mu=5",
               "--n", "120", "--out", str(tmp_path)])
    assert rc == 0
    report = _read_report(tmp_path / "husimi_report.json")
    assert report["weights"][0]["weight"] > 0.2


def test_provenance_echoes_config(tmp_path):
    assert main(["spectrum", "--set", "model.h=1", "--n", "4",
                 "--out", str(tmp_path)]) == 0
    report = _read_report(tmp_path / "spectrum_report.json")
    prov = report["provenance"]
    assert prov["package"] == "spinsc"
    assert prov["config"]["model.h"] == 1
    assert prov["tolerances"]["det_t_unit"] == 1e-10
