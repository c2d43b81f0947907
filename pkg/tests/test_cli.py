import json

from ringscft.cli import main


def test_single_run(tmp_path, capsys):
    code = main(["--element", "H", "--beta", "50", "--out", str(tmp_path), "--no-figures", "--no-heatmap",
                 "--grid", "n_r=40,n_theta=4,n_phi=4", "--compare"])
    out = capsys.readouterr().out
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("row,U_en,U_ee")
    binding = next(l for l in lines if l.startswith("binding,"))
    assert abs(float(binding.split(",")[1]) - 0.5) < 1e-5
    assert any(l.startswith("reference,") for l in lines)
    assert json.loads((tmp_path / "report.json").read_text())["element"] == "H"


def test_unknown_element_exits_with_config_error(tmp_path, capsys):
    assert main(["--element", "Xx", "--out", str(tmp_path)]) == 1
    assert "unknown element" in capsys.readouterr().err


def test_config_file_and_missing_element(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"element = He\nspherical_only = true\nfigures = false\nheatmap = false\nout = {tmp_path / 'o'}\n")
    assert main(["--config", str(cfg)]) == 0
    assert (tmp_path / "o" / "total.csv").exists()
    assert main(["--config", str(tmp_path / "missing.cfg")]) == 1
    try:
        main([])
    except SystemExit as exc:
        assert exc.code == 2
    else:
        raise AssertionError("expected argparse to exit")


def test_non_convergence_reports_residuals(tmp_path, capsys):
    code = main(["-Z", "4", "--max-iter", "2", "--out", str(tmp_path), "--no-figures", "--no-heatmap",
                 "--spherical-only"])
    assert code == 2
    err = capsys.readouterr().err
    assert "did not converge" in err and "last residuals" in err


def test_sweep_command(tmp_path, capsys):
    code = main(["sweep", "--elements", "H,He", "--out", str(tmp_path), "--no-figures", "--no-heatmap",
                 "--spherical-only"])
    assert code == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("element,basis,binding")
    assert len(out) == 3
    assert (tmp_path / "sweep.csv").exists()
    assert main(["sweep", "--elements", "", "--out", str(tmp_path / "e")]) == 0
