import json
from pathlib import Path

import numpy as np
import pytest

from mdlina.cli import main, read_cv_grid
from mdlina.data import Hyperparams, read_domain_csv, read_manifest
from mdlina.measurement import load_measurement, save_measurement
from mdlina.multidomain import HardAssignment
from mdlina.optim import acyclicity_h
from mdlina.synth import GenConfig, read_matrix_csv, write_matrix_csv
from mdlina.triad import read_clusters


def _snapshot(root):
    root = Path(root)
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _simulate(out, *extra):
    assert main(["simulate", "--out", str(out), *extra]) == 0
    return Path(out)


def _clusters(sim, M=1):
    return [str(sim / f"domain{m + 1}_clusters.json") for m in range(M)]


def test_simulate_defaults(tmp_path, capsys):
    sim = _simulate(tmp_path / "sim")
    line = capsys.readouterr().out.strip()
    assert "q=5" in line and "p=10" in line and "n=1000" in line and "M=1" in line and "seed=0" in line
    B, rows, cols = read_matrix_csv(sim / "domain1_B_true.csv")
    assert B.shape == (5, 5) and rows == cols
    assert acyclicity_h(B) < 1e-9
    d = read_domain_csv(sim / "domain1.csv")
    assert d.data.shape == (10, 1000)
    assert GenConfig(**json.loads((sim / "gen_config.json").read_text())).q == 5


def test_simulate_trials_are_seed_distinct(tmp_path):
    sim = _simulate(tmp_path / "sim", "--trials", "3", "--q", "3", "--n", "200")
    dirs = sorted(p for p in sim.iterdir() if p.is_dir())
    assert len(dirs) == 3
    data = [read_domain_csv(d / "domain1.csv").data for d in dirs]
    assert not np.allclose(data[0], data[1]) and not np.allclose(data[1], data[2])
    seeds = [json.loads((d / "gen_config.json").read_text())["seed"] for d in dirs]
    assert seeds == [0, 1, 2]


def test_simulate_shared_domains(tmp_path):
    sim = _simulate(tmp_path / "sim", "--domains", "2", "--shared", "--q", "3", "--n", "200")
    md = read_manifest(sim / "manifest.json")
    assert md.M == 2
    B1, B2 = (read_matrix_csv(sim / f"domain{m}_B_true.csv")[0] for m in (1, 2))
    np.testing.assert_array_equal(B1 != 0, B2 != 0)


def test_fit_default_simulation(tmp_path):
    sim = _simulate(tmp_path / "sim")
    out = tmp_path / "fit"
    assert main(["fit", str(sim / "domain1.csv"), "--clusters", *_clusters(sim), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["final_h"] < 1e-8 and report["pruned_h"] < 1e-8
    assert report["flags"] == []
    assert (out / "graph.dot").read_text().startswith("digraph")


def test_fit_missing_clusters_is_usage_error(tmp_path, capsys):
    sim = _simulate(tmp_path / "sim", "--q", "2", "--n", "100")
    capsys.readouterr()
    assert main(["fit", str(sim / "domain1.csv"), "--out", str(tmp_path / "fit")]) == 2
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["exit_code"] == 2 and rec["error"] == "UsageError"


def test_missing_input_is_io_error(tmp_path, capsys):
    assert main(["fit", str(tmp_path / "nope.csv"), "--locate", "--out", str(tmp_path / "fit")]) == 3
    assert json.loads(capsys.readouterr().err.strip())["exit_code"] == 3


def test_bad_argument_exits_two(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--penalty", "newton", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_config_file_and_flag_override(tmp_path):
    sim = _simulate(tmp_path / "sim", "--q", "2", "--n", "300")
    cfg = tmp_path / "hp.json"
    cfg.write_text(json.dumps({"lambda1": 0.05, "threshold_eps": 0.2}))
    out = tmp_path / "fit"
    main(["fit", str(sim / "domain1.csv"), "--clusters", *_clusters(sim), "--config", str(cfg),
          "--eps", "0.25", "--out", str(out)])
    hp = Hyperparams.from_dict(json.loads((out / "report.json").read_text())["hyperparams"])
    assert hp.lambda1 == 0.05 and hp.threshold_eps == 0.25


def test_fit_two_domains(tmp_path):
    sim = _simulate(tmp_path / "sim", "--domains", "2", "--shared", "--q", "2", "--n", "500")
    out = tmp_path / "fit"
    code = main(["fit", "--manifest", str(sim / "manifest.json"), "--clusters", *_clusters(sim, 2),
                 "--eps", "0.05", "--out", str(out)])
    assert code in (0, 1)
    for name in ("B_tilde.csv", "pruned_B_tilde.csv", "H.csv", "assignment.json", "graph.dot", "report.json"):
        assert (out / name).exists()
    H, rows, cols = read_matrix_csv(out / "H.csv")
    assert H.shape == (4, 2) and cols == ["g1", "g2"]
    a = HardAssignment.from_dict(json.loads((out / "assignment.json").read_text()))
    assert len(a.row_to_interest) == 4 and a.q_tilde == 2
    assert acyclicity_h(read_matrix_csv(out / "pruned_B_tilde.csv")[0]) < 1e-8


def test_locate_writes_readable_clusters(tmp_path):
    sim = _simulate(tmp_path / "sim", "--q", "2", "--n", "500")
    out = tmp_path / "loc"
    assert main(["locate", str(sim / "domain1.csv"), "--out", str(out)]) == 0
    d = read_domain_csv(sim / "domain1.csv")
    spec = read_clusters(out / "domain1_clusters.json", d.variable_names)
    assert spec.q >= 1


def test_evaluate_self_is_perfect(tmp_path):
    sim = _simulate(tmp_path / "sim", "--q", "3", "--n", "2000")
    fit = tmp_path / "fit"
    main(["fit", str(sim / "domain1.csv"), "--clusters", *_clusters(sim), "--out", str(fit)])
    # overwrite the estimate with the truth: a perfect model scores f1 = 1
    (fit / "pruned_B.csv").write_bytes((sim / "domain1_B_true.csv").read_bytes())
    out = tmp_path / "ev"
    assert main(["evaluate", "--model", str(fit), "--truth", str(sim), "--out", str(out)]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["f1"] == 1.0
    rows = (out / "vif.csv").read_text().strip().splitlines()
    assert len(rows) - 1 == 6
    assert all(float(r.split(",")[1]) >= 1 for r in rows[1:])


def test_evaluate_without_inputs_is_usage_error(tmp_path):
    assert main(["evaluate", "--out", str(tmp_path)]) == 2


def test_evaluate_batch(tmp_path):
    out = tmp_path / "batch"
    assert main(["evaluate", "--trials", "3", "--jobs", "2", "--q", "3", "--n", "300", "--out", str(out)]) == 0
    trials = (out / "trials.csv").read_text().strip().splitlines()
    assert len(trials) == 4
    summary = {ln.split(",")[0]: ln.split(",")[1:] for ln in (out / "summary.csv").read_text().splitlines()[1:]}
    q1, med, q3, n_ok = summary["f1"]
    assert float(q1) <= float(med) <= float(q3) and int(n_ok) == 3
    assert all((out / f"trial{k:03d}" / "metrics.json").exists() for k in (1, 2, 3))


def test_cv_one_cell_and_default_grid(tmp_path):
    sim = _simulate(tmp_path / "sim", "--q", "2", "--n", "200")
    args = [str(sim / "domain1.csv"), "--clusters", *_clusters(sim)]
    out = tmp_path / "cv1"
    assert main(["cv", *args, "--folds", "3", "--lambda-grid", "0.1", "--eps-grid", "0.3", "--out", str(out)]) == 0
    best = json.loads((out / "cv_best.json").read_text())
    assert (best["lambda1"], best["eps"]) == (0.1, 0.3)
    out = tmp_path / "cv2"
    assert main(["cv", *args, "--folds", "2", "--out", str(out)]) == 0
    rows = read_cv_grid(out / "cv_grid.csv")
    assert len(rows) == 5 * 6
    assert (best := json.loads((out / "cv_best.json").read_text()))["folds"] == 2
    ok = [r for r in rows if not r[3]]
    assert min(ok, key=lambda r: (r[2], r[0], r[1]))[:2] == (best["lambda1"], best["eps"])


def test_fit_outputs_round_trip(tmp_path):
    sim = _simulate(tmp_path / "sim", "--q", "3", "--n", "500")
    out = tmp_path / "fit"
    main(["fit", str(sim / "domain1.csv"), "--clusters", *_clusters(sim), "--out", str(out)])
    model = load_measurement(out / "measurement.json")
    again = tmp_path / "again.json"
    save_measurement(again, model)
    assert again.read_bytes() == (out / "measurement.json").read_bytes()
    B, rows, _ = read_matrix_csv(out / "B.csv")
    write_matrix_csv(tmp_path / "B2.csv", B, rows)
    assert (tmp_path / "B2.csv").read_bytes() == (out / "B.csv").read_bytes()


def _run_all(root):
    root = Path(root)
    sim = _simulate(root / "sim", "--q", "2", "--n", "300", "--seed", "4")
    md2 = _simulate(root / "md", "--domains", "2", "--shared", "--q", "2", "--n", "300", "--seed", "4")
    data = [str(sim / "domain1.csv")]
    main(["locate", *data, "--out", str(root / "loc")])
    main(["fit", *data, "--clusters", *_clusters(sim), "--seed", "4", "--out", str(root / "fit")])
    main(["fit-md", "--manifest", str(md2 / "manifest.json"), "--clusters", *_clusters(md2, 2),
          "--seed", "4", "--out", str(root / "fitmd")])
    main(["evaluate", "--model", str(root / "fit"), "--truth", str(sim), "--out", str(root / "ev")])
    main(["evaluate", "--trials", "2", "--q", "2", "--n", "200", "--seed", "4", "--out", str(root / "batch")])
    main(["cv", *data, "--clusters", *_clusters(sim), "--folds", "3", "--lambda-grid", "0.01,0.1",
          "--eps-grid", "0.1,0.3", "--seed", "4", "--out", str(root / "cv")])
    return _snapshot(root)


def test_every_subcommand_is_byte_deterministic(tmp_path):
    a, b = _run_all(tmp_path / "a"), _run_all(tmp_path / "b")
    assert sorted(a) == sorted(b)
    assert [k for k in a if a[k] != b[k]] == []
