"""Command-line front end: simulate, locate, fit, fit-md, evaluate, cv."""

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .data import (
    Hyperparams,
    augment,
    load_config,
    read_domain_csv,
    read_manifest,
    standardize,
    standardize_all,
)
from .errors import MdLinaError, UsageError
from .evaluation import cross_validate, matched_effect_error, skeleton_metrics, vif, vif_flags
from .lina import fit_structure, to_dot
from .measurement import augmented_model, fit_cfa, load_measurement, save_measurement
from .multidomain import fit_md
from .optim import acyclicity_h
from .synth import GenConfig, gen_multidomain, read_matrix_csv, write_dataset, write_matrix_csv
from .tables import read_table_csv, write_table_csv
from .triad import IndependenceTestConfig, locate_clusters, read_clusters, write_clusters

log = logging.getLogger("mdlina")

DEFAULT_LAMBDA_GRID = (0.001, 0.01, 0.1, 0.3, 1.0)
DEFAULT_EPS_GRID = (0.05, 0.1, 0.2, 0.3, 0.4, 0.6)
CV_GRID_HEADER = ("lambda1", "eps", "mean_validation_negloglik", "failed")


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _hyperparams(args):
    hp = load_config(args.config) if getattr(args, "config", None) else Hyperparams()
    return hp.with_(
        lambda1=getattr(args, "lambda1", None),
        lambda2=getattr(args, "lambda2", None),
        lambda3=getattr(args, "lambda3", None),
        threshold_eps=getattr(args, "eps", None),
        penalty_mode=getattr(args, "penalty", None),
        seed=getattr(args, "seed", None),
        q_tilde=getattr(args, "q_tilde", None),
    )


def _load_domains(args):
    if args.manifest:
        return read_manifest(args.manifest)
    if not args.data:
        raise UsageError("give a data CSV or --manifest")
    from .data import MultiDomainDataset

    return MultiDomainDataset(tuple(read_domain_csv(p, i + 1) for i, p in enumerate(args.data)))


def _clusters_for(md, args):
    if args.clusters:
        if len(args.clusters) != md.M:
            raise UsageError(f"{md.M} domain(s) but {len(args.clusters)} clusters file(s)")
        return [read_clusters(p, d.variable_names) for p, d in zip(args.clusters, md.domains)]
    if args.locate:
        return [locate_clusters(d) for d in md.domains]
    raise UsageError("no clusters: pass --clusters PATH or --locate")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def _gen_config(args, seed):
    return GenConfig(q=args.q, indicators_per_factor=args.indicators, n=args.n,
                     noise_ratio=args.noise_ratio, noise_dist=args.noise_dist,
                     edge_density=args.edge_density, seed=seed)


def cmd_simulate(args):
    out = Path(args.out)
    for k in range(args.trials):
        seed = args.seed + k
        cfg = _gen_config(args, seed)
        md, truths = gen_multidomain(args.domains, cfg, args.shared or args.domains == 1, seed)
        target = out if args.trials == 1 else out / f"trial{k + 1:03d}"
        write_dataset(target, md, truths, cfg)
        for t in truths:
            if acyclicity_h(t.B_true) >= 1e-9:
                raise MdLinaError("generated graph is cyclic")
        print(f"simulated q={cfg.q} p={md.domains[0].p} n={cfg.n} M={md.M} seed={seed} -> {target}")
    return 0


def cmd_locate(args):
    md = _load_domains(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = IndependenceTestConfig(alpha=args.alpha)
    for d in md.domains:
        spec = locate_clusters(standardize(d), cfg)
        path = out / f"domain{d.domain_id}_clusters.json"
        write_clusters(path, spec, d.variable_names)
        print(f"domain {d.domain_id}: {spec.q} cluster(s) -> {path}")
    return 0


def _fit_single(d, clusters, hp, out):
    d = standardize(d)
    model = fit_cfa(d, clusters)
    sm = fit_structure(model, d.data, hp)
    save_measurement(out / "measurement.json", model)
    names = list(sm.factor_names)
    write_matrix_csv(out / "B.csv", sm.B, names)
    write_matrix_csv(out / "pruned_B.csv", sm.pruned_B, names)
    with open(out / "graph.dot", "w") as fh:
        fh.write(to_dot(sm.pruned_B, names))
    st = sm.state
    report = {
        "domains": 1,
        "factors": names,
        "final_h": st.h_value,
        "pruned_h": acyclicity_h(sm.pruned_B),
        "final_rho": st.rho,
        "final_alpha": st.alpha,
        "outer_iterations": st.outer_iter,
        "line_search_failures": st.line_search_failures,
        "flags": sm.flags,
        "heywood": model.heywood,
        "trace": [list(t) for t in st.trace],
        "hyperparams": hp.to_dict(),
    }
    _dump_json(out / "report.json", report)
    return sm.flags


def _fit_multi(md, specs, hp, out):
    md = standardize_all(md)
    models = [fit_cfa(d, c) for d, c in zip(md.domains, specs)]
    aug = augment(md)
    model = augmented_model(models)
    res = fit_md(model, aug, hp.q_tilde or None, hp)
    save_measurement(out / "measurement.json", model)
    inames = list(res.interest_names)
    fnames = list(res.factor_names)
    write_matrix_csv(out / "B_tilde.csv", res.B_tilde, inames)
    write_matrix_csv(out / "pruned_B_tilde.csv", res.pruned_B_tilde, inames)
    write_matrix_csv(out / "H.csv", res.H.H, fnames, inames)
    _dump_json(out / "assignment.json", res.assignment.to_dict(fnames, inames))
    with open(out / "graph.dot", "w") as fh:
        fh.write(to_dot(res.pruned_B_tilde, inames))
    st = res.refit.state if res.refit is not None else None
    report = {
        "domains": md.M,
        "factors": fnames,
        "interest_factors": inames,
        "final_h": st.h_value if st else 0.0,
        "pruned_h": acyclicity_h(res.pruned_B_tilde),
        "final_rho": st.rho if st else None,
        "alternation_trace": [list(t) for t in res.trace],
        "flags": res.flags,
        "hyperparams": hp.to_dict(),
    }
    _dump_json(out / "report.json", report)
    return res.flags


def cmd_fit(args, force_md=False):
    hp = _hyperparams(args)
    md = _load_domains(args)
    specs = _clusters_for(md, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if md.M == 1 and not force_md:
        flags = _fit_single(md.domains[0], specs[0], hp, out)
    else:
        flags = _fit_multi(md, specs, hp, out)
    print(f"fit M={md.M} -> {out}" + (f" flags={','.join(flags)}" if flags else ""))
    return 1 if flags else 0


def cmd_fit_md(args):
    return cmd_fit(args, force_md=True)


def _evaluate_dirs(model_dir, truth_dir, domain=1):
    model_dir, truth_dir = Path(model_dir), Path(truth_dir)
    B_est, _, _ = read_matrix_csv(model_dir / "pruned_B.csv")
    B_true, _, _ = read_matrix_csv(truth_dir / f"domain{domain}_B_true.csv")
    G_true, _, _ = read_matrix_csv(truth_dir / f"domain{domain}_G_true.csv")
    model = load_measurement(model_dir / "measurement.json")
    hp = Hyperparams.from_dict(json.loads((model_dir / "report.json").read_text())["hyperparams"])
    m = skeleton_metrics(B_est, B_true)
    perm, signs, err = matched_effect_error(B_est, model.loadings, B_true, G_true)
    data = read_domain_csv(truth_dir / f"domain{domain}.csv", domain)
    return m, perm, signs, err, data, hp


def _write_metrics(out, m, perm, signs, err, data):
    out.mkdir(parents=True, exist_ok=True)
    rec = m.to_dict()
    rec.update({"matched_effect_error": err, "permutation": perm.tolist(), "signs": signs.tolist()})
    _dump_json(out / "metrics.json", rec)
    v = vif(data.data)
    flags = vif_flags(v)
    write_table_csv(out / "vif.csv", ("variable", "vif", "flag"),
                    [(name, float(val), int(f)) for name, val, f in zip(data.variable_names, v, flags)])
    return rec


def _batch_trial(job):
    args_dict, k = job
    args = argparse.Namespace(**args_dict)
    seed = args.seed + k
    cfg = _gen_config(args, seed)
    md, truths = gen_multidomain(1, cfg, True, seed)
    trial = Path(args.out) / f"trial{k + 1:03d}"
    write_dataset(trial / "data", md, truths, cfg)
    fit_dir = trial / "fit"
    fit_dir.mkdir(parents=True, exist_ok=True)
    spec = read_clusters(trial / "data" / "domain1_clusters.json", md.domains[0].variable_names)
    try:
        _fit_single(md.domains[0], spec, _hyperparams(args).with_(seed=seed), fit_dir)
        m, perm, signs, err, data, _ = _evaluate_dirs(fit_dir, trial / "data")
    except MdLinaError as exc:
        return {"trial": k + 1, "seed": seed, "error": type(exc).__name__}
    rec = _write_metrics(trial, m, perm, signs, err, data)
    return {"trial": k + 1, "seed": seed, **{key: rec[key] for key in ("recall", "precision", "f1", "matched_effect_error")}}


def cmd_evaluate(args):
    out = Path(args.out)
    if args.trials:
        jobs = [(vars(args), k) for k in range(args.trials)]
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as ex:
                rows = list(ex.map(_batch_trial, jobs))
        else:
            rows = [_batch_trial(j) for j in jobs]
        out.mkdir(parents=True, exist_ok=True)
        keys = ("recall", "precision", "f1", "matched_effect_error")
        write_table_csv(out / "trials.csv", ("trial", "seed", *keys, "error"),
                        [(r["trial"], r["seed"], *(float(r[k]) if k in r else None for k in keys), r.get("error"))
                         for r in rows])
        summary = []
        for key in keys:
            v = np.array([r[key] for r in rows if key in r])
            if v.size:
                summary.append((key, *(float(x) for x in np.percentile(v, [25, 50, 75])), int(v.size)))
        write_table_csv(out / "summary.csv", ("metric", "q1", "median", "q3", "n_ok"), summary)
        med = np.median([r["f1"] for r in rows if "f1" in r]) if rows else float("nan")
        print(f"evaluated {len(rows)} trial(s): median f1 = {med:.4f} -> {out}")
        return 0
    if not (args.model and args.truth):
        raise UsageError("evaluate needs --model DIR and --truth DIR, or --trials N")
    m, perm, signs, err, data, _ = _evaluate_dirs(args.model, args.truth)
    _write_metrics(out, m, perm, signs, err, data)
    print(f"f1={m.f1:.4f} recall={m.recall:.4f} precision={m.precision:.4f} effect_error={err:.4f} -> {out}")
    return 0


def cmd_cv(args):
    hp = _hyperparams(args)
    md = _load_domains(args)
    if md.M != 1:
        raise UsageError("cv runs on a single domain")
    spec = _clusters_for(md, args)[0]
    grid = [(a, b) for a in args.lambda_grid for b in args.eps_grid]
    rep = cross_validate(md.domains[0], spec, grid, args.folds, hp)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table_csv(out / "cv_grid.csv", CV_GRID_HEADER,
                    [(float(l1), float(eps), float(v), int(bad)) for l1, eps, v, bad in rep.rows()])
    _dump_json(out / "cv_best.json", {"lambda1": rep.best_cell[0] if rep.best_cell else None,
                                      "eps": rep.best_cell[1] if rep.best_cell else None,
                                      "folds": args.folds, "seed": hp.seed})
    print(f"cv best lambda1={rep.best_cell[0]!r} eps={rep.best_cell[1]!r} -> {out}" if rep.best_cell
          else f"cv: every cell failed -> {out}")
    return 0 if rep.best_cell else 1


def read_cv_grid(path):
    """Parse a cv_grid.csv back into ``[(lambda1, eps, value, failed)]``."""
    _, rows = read_table_csv(path)
    return [(float(a), float(b), float(v), bool(bad)) for a, b, v, bad in rows]


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _add_data(p):
    p.add_argument("data", nargs="*", help="domain CSV file(s); one per domain")
    p.add_argument("--manifest", "--domains-manifest", dest="manifest", help="JSON manifest listing domain CSVs")


def _add_hp(p):
    p.add_argument("--config", help="JSON file of hyperparameters; flags override it")
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--lambda3", type=float)
    p.add_argument("--eps", type=float, help="pruning threshold")
    p.add_argument("--penalty", choices=("qpm", "alm"))
    p.add_argument("--seed", type=int)


def _add_clusters(p):
    p.add_argument("--clusters", nargs="+", help="clusters JSON per domain")
    p.add_argument("--locate", action="store_true", help="discover clusters with Triad tests")


def _add_gen(p):
    p.add_argument("--q", type=int, default=5)
    p.add_argument("--indicators", type=int, default=2)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--noise-ratio", type=float, default=0.1)
    p.add_argument("--noise-dist", choices=("laplace", "subgaussian", "supergaussian"), default="laplace")
    p.add_argument("--edge-density", type=float)


def build_parser():
    ap = argparse.ArgumentParser(prog="mdlina", description="Latent-factor causal structure learning")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write synthetic datasets with ground truth")
    _add_gen(p)
    p.add_argument("--domains", type=int, default=1)
    p.add_argument("--shared", action="store_true", help="share one graph support across domains")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("locate", help="find pure-indicator clusters")
    _add_data(p)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_locate)

    for name, func, text in (("fit", cmd_fit, "fit measurement and structure models"),
                             ("fit-md", cmd_fit_md, "fit the shared multi-domain model, even for one domain")):
        p = sub.add_parser(name, help=text)
        _add_data(p)
        _add_clusters(p)
        _add_hp(p)
        p.add_argument("--q-tilde", type=int)
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate", help="score a fit against ground truth, or run a batch")
    p.add_argument("--model", help="fit output directory")
    p.add_argument("--truth", help="simulate output directory")
    p.add_argument("--trials", type=int, default=0, help="simulate, fit and score N trials")
    p.add_argument("--jobs", type=int, default=1)
    _add_gen(p)
    _add_hp(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cv", help="k-fold selection of lambda1 and eps")
    _add_data(p)
    _add_clusters(p)
    _add_hp(p)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--lambda-grid", type=_floats, default=list(DEFAULT_LAMBDA_GRID))
    p.add_argument("--eps-grid", type=_floats, default=list(DEFAULT_EPS_GRID))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cv)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    if getattr(args, "seed", None) is None and args.command == "evaluate":
        args.seed = 0
    try:
        return args.func(args)
    except MdLinaError as exc:
        _error_record(exc, exc.exit_code)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        _error_record(exc, 3)
        return 3
    except ValueError as exc:
        _error_record(exc, 2)
        return 2


def _error_record(exc, code):
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
