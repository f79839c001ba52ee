import json

import numpy as np
import pytest

from sobolev_forge import serialize
from sobolev_forge.algebra import assemble_resnet, mlp_to_cnn
from sobolev_forge.cli import main
from sobolev_forge.netcore import audit_class
from sobolev_forge.scalarnets import build_trapezoid
from sobolev_forge.studies import ConfigError, validate_config, run_study


def _write_cfg(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_validate_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="bogus"):
        validate_config(
            {"kind": "euclidean-rate", "target": "sinprod", "alpha": 2, "N_list": [2], "bogus": 1}
        )


def test_validate_names_missing_field():
    with pytest.raises(ConfigError, match="alpha"):
        validate_config({"kind": "euclidean-rate", "target": "sinprod", "N_list": [2]})


def test_validate_unknown_kind():
    with pytest.raises(ConfigError, match="kind"):
        validate_config({"kind": "nope"})


def test_cli_config_error_exit_2(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, {"target": "sinprod", "N_list": [2, 4]})
    code = main(["--out", str(tmp_path / "out"), "rate-study", "--config", cfg])
    assert code == 2
    assert "alpha" in capsys.readouterr().err


def test_rate_study_mini(tmp_path):
    cfg = {
        "kind": "euclidean-rate",
        "target": "sinprod",
        "alpha": 2,
        "N_list": [2, 4],
        "grid": 21,
        "slope_window_k0": [-4.0, 0.0],
        "slope_window_k1": [-4.0, 1.0],
    }
    out = tmp_path / "out"
    code, summary = run_study(cfg, out)
    assert code == 0
    csv = (out / "rates.csv").read_text().strip().splitlines()
    assert csv[0].split(",")[0] == "target"
    assert len(csv) == 1 + 2 * 2  # two N values x k in {0, 1}
    assert (out / "summary.json").exists() and (out / "rates.svg").exists()
    assert summary["slope_k0"] < -0.5


def test_rate_study_determinism(tmp_path):
    cfg = {
        "kind": "euclidean-rate",
        "target": "sinprod",
        "alpha": 2,
        "N_list": [2, 4],
        "grid": 21,
        "slope_window_k0": [-4.0, 0.0],
        "slope_window_k1": [-4.0, 1.0],
    }
    run_study(cfg, tmp_path / "a")
    run_study(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "rates.csv").read_bytes() == (tmp_path / "b" / "rates.csv").read_bytes()


def test_build_eval_audit_netio_flow(tmp_path, capsys):
    build_cfg = _write_cfg(
        tmp_path, {"target": "poly-xy", "alpha": 3, "N": 2, "compile": True}, "build.json"
    )
    out = tmp_path / "art"
    assert main(["--out", str(out), "build", "--config", build_cfg]) == 0
    model_path = out / "model.json"
    assert model_path.exists()
    capsys.readouterr()

    assert main(["--out", str(tmp_path / "audit"), "audit", "--net", str(model_path)]) == 0
    doc = json.loads(capsys.readouterr().out)

    net = serialize.load(model_path)
    params = audit_class(net)
    assert doc.get("M") == params.M and doc.get("kappa1") == params.kappa1

    assert main(["net-io", "check", "--net", str(model_path)]) == 0
    dest = tmp_path / "copy.json"
    assert main(["net-io", "copy", "--net", str(model_path), "--dest", str(dest)]) == 0
    assert serialize.to_dict(serialize.load(dest)) == serialize.to_dict(net)
    capsys.readouterr()

    code = main(["eval", "--net", str(model_path), "--at", "0.3,0.4", "--at", "0.5,0.5"])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "x0,x1,value"
    assert len(lines) == 3


def test_audit_json_matches_audit_class(tmp_path):
    net = assemble_resnet([mlp_to_cnn(build_trapezoid(1, 4).as_mlp(), 2)])
    path = tmp_path / "psi.json"
    serialize.save(path, net)
    code, doc = run_study({"kind": "audit", "net": str(path)}, tmp_path / "out")
    params = audit_class(net)
    assert code == 0
    assert (doc["M"], doc["L"], doc["J"], doc["K"]) == (params.M, params.L, params.J, params.K)
    assert doc["kappa1"] == params.kappa1


def test_saved_trapezoid_reload_identical(tmp_path):
    net = assemble_resnet([mlp_to_cnn(build_trapezoid(0, 1).as_mlp(), 2)])
    path = tmp_path / "t.json"
    serialize.save(path, net)
    back = serialize.load(path)
    from sobolev_forge.netcore import resnet_forward_batch

    xs = np.linspace(-3, 3, 1001)[:, None]
    assert np.array_equal(resnet_forward_batch(net, xs), resnet_forward_batch(back, xs))


def test_bad_network_file_exit_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{")
    assert main(["audit", "--net", str(path)]) == 2


def test_manifold_study_mini(tmp_path):
    cfg = {
        "kind": "manifold-rate",
        "target": "circle-sin",
        "alpha": 2,
        "N_list": [4, 8],
        "r": 0.2,
        "resolution": 20,
        "slope_window_k0": [-6.0, 0.0],
        "slope_window_k1": [-6.0, 1.0],
        "separation_slope": -0.5,
    }
    out = tmp_path / "m"
    code, summary = run_study(cfg, out)
    assert code == 0
    lines = (out / "rates.csv").read_text().strip().splitlines()
    assert lines[0] == "manifold,D,d,N,k,error,charts"
    assert len(lines) == 1 + 2 * 2
    assert summary["chart_count"] >= 32
    assert summary["slope_k0"] < -1.0
