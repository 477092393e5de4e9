"""Command-line harness.

Subcommands: advise, run, rho-sweep, reference, gen-tv, compare.  Options
come from a flat "key = value" config file plus command-line overrides
(later wins).  Traces are CSV with the fixed header below; exit codes are
0 success, 1 configuration/input error, 2 divergence.
"""

import argparse
import csv
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import advisor, metrics, problems, solver

CSV_HEADER = ["stage", "iter", "epochs", "time_s", "objective",
              "feasibility", "R", "prox_grad_sq", "test_loss"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2


class CliError(ValueError):
    pass


@dataclass
class RunSpec:
    problem: str = "lasso"            # ggfl | tv | lasso
    data: str | None = None
    loss: str = "logistic"
    lam: float = 1e-5
    l2: float = 0.0
    edges: str | None = None
    corr_threshold: float | None = None
    eta: float | None = None
    rho: float | None = None
    gamma: float | None = None
    m: int | None = None
    b: int = 1
    stages: int = 10
    variant: str = "general_convex"
    update_mode: str = "linearized"
    averaging: str = "last_iterate"
    seed: int = 0
    warm_start: int | None = None
    trace_out: str | None = None
    test_data: str | None = None
    test_split: float = 0.0
    eval_cadence: str = "iter"
    reference: str | None = None


def _load_config_file(path):
    values = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{line_no}: expected 'key = value'")
            key, val = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = val
    return values


_FIELD_TYPES = {
    "lam": float, "l2": float, "corr_threshold": float, "eta": float,
    "rho": float, "gamma": float, "m": int, "b": int, "stages": int,
    "seed": int, "warm_start": int, "test_split": float,
}


def build_spec(args) -> RunSpec:
    spec = RunSpec()
    layered = {}
    if getattr(args, "config", None):
        layered.update(_load_config_file(args.config))
    for key in vars(spec):
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            layered[key] = cli_val
    for key, val in layered.items():
        if not hasattr(spec, key):
            raise CliError(f"unknown config key {key!r}")
        if isinstance(val, str) and key in _FIELD_TYPES:
            try:
                val = _FIELD_TYPES[key](val)
            except ValueError:
                raise CliError(f"bad value for {key}: {val!r}")
        setattr(spec, key, val)
    return spec


def load_dataset(spec: RunSpec):
    if spec.data is None:
        raise CliError("no dataset: pass --data (see gen-tv for synthetic data)")
    relabel = spec.loss in ("logistic", "sigmoid")
    with open(spec.data) as fh:
        return problems.parse_libsvm(fh, relabel=relabel)


def split_train_test(data, spec: RunSpec):
    """Holdout split: explicit test file, else a seeded shuffle."""
    if spec.test_data:
        with open(spec.test_data) as fh:
            relabel = spec.loss in ("logistic", "sigmoid")
            return data, problems.parse_libsvm(fh, d=data.d, relabel=relabel)
    if spec.test_split > 0:
        if not spec.test_split < 1:
            raise CliError("test_split must be in (0, 1)")
        rng = np.random.default_rng(spec.seed + 0x5EED)
        perm = rng.permutation(data.n)
        n_test = int(round(data.n * spec.test_split))
        if n_test == 0 or n_test == data.n:
            raise CliError("test_split leaves an empty split")
        te, tr = perm[:n_test], perm[n_test:]
        mk = lambda ix: problems.SampleSet(
            features=data.features[ix], labels=data.labels[ix],
            classification=data.classification)
        return mk(tr), mk(te)
    return data, None


def build_problem(spec: RunSpec, data) -> problems.ConstrainedProblem:
    if spec.problem == "tv":
        return problems.build_tv(data, spec.lam, l2_strength=spec.l2)
    if spec.problem == "lasso":
        return problems.build_lasso(data, spec.loss, spec.lam,
                                    l2_strength=spec.l2)
    if spec.problem == "ggfl":
        if spec.edges:
            with open(spec.edges) as fh:
                edges = problems.parse_edge_list(fh)
        else:
            thr = spec.corr_threshold if spec.corr_threshold is not None else 0.9
            edges = problems.graph_from_correlation(data, thr)
        return problems.build_ggfl(data, edges, spec.loss, spec.lam,
                                   l2_strength=spec.l2)
    raise CliError(f"unknown problem {spec.problem!r}")


def resolve_solver_config(spec: RunSpec, p) -> solver.SolverConfig:
    n = p.f.n
    rho = spec.rho
    if rho is None:
        try:
            rho = advisor.rho_star(advisor.conditioning_from_problem(p))
        except advisor.AdvisorError:
            rho = 1.0
    eta = spec.eta if spec.eta is not None else 1.0 / p.f.L_f_bound
    m = spec.m if spec.m is not None else math.ceil(2 * n / spec.b)
    warm = spec.warm_start if spec.warm_start is not None else math.ceil(n / spec.b)
    return solver.SolverConfig(
        eta=eta, rho=rho, m=m, b=spec.b, stages=spec.stages,
        variant=spec.variant, update_mode=spec.update_mode, gamma=spec.gamma,
        averaging=spec.averaging, seed=spec.seed, warm_start=warm)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_trace(records, stream, extra_col=None):
    header = (["variant"] if extra_col else []) + CSV_HEADER
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    for rec in records:
        row = [extra_col] if extra_col else []
        row += [rec.stage, rec.iter, _fmt(rec.epochs), _fmt(rec.time_s),
                _fmt(rec.objective), _fmt(rec.feasibility), _fmt(rec.R),
                _fmt(rec.prox_grad_sq), _fmt(rec.test_loss)]
        w.writerow(row)


def load_reference(path) -> metrics.ReferenceSolution:
    with open(path) as fh:
        tokens = [line.strip() for line in fh if line.strip()]
    it = iter(tokens)
    head = {}
    for _ in range(4):
        key, val = next(it).split()
        head[key] = val
    d = int(head["d"])
    rows = int(head["rows"])

    def block(name, count):
        tag = next(it)
        if tag != name:
            raise CliError(f"reference file: expected block {name}, got {tag}")
        return np.array([float(next(it)) for _ in range(count)])

    x = block("x_star", d)
    y = block("y_star", rows)
    u = block("u_star", rows)
    g = block("g_subgrad", rows)
    return metrics.ReferenceSolution(
        x_star=x, y_star=y, u_star=u, rho=float(head["rho"]),
        g_subgrad_at_ystar=g, quality=float(head["quality"]))


def save_reference(ref: metrics.ReferenceSolution, path):
    with open(path, "w") as fh:
        fh.write(f"d {len(ref.x_star)}\n")
        fh.write(f"rows {len(ref.y_star)}\n")
        fh.write(f"rho {ref.rho:.17g}\n")
        fh.write(f"quality {ref.quality:.17g}\n")
        for name, vec in (("x_star", ref.x_star), ("y_star", ref.y_star),
                          ("u_star", ref.u_star),
                          ("g_subgrad", ref.g_subgrad_at_ystar)):
            fh.write(name + "\n")
            for v in vec:
                fh.write(f"{v:.17g}\n")


def _make_collector(spec, p, cfg, test_set):
    ref = load_reference(spec.reference) if spec.reference else None
    return metrics.TraceCollector(
        p, ref=ref, test_set=test_set, rho=cfg.rho,
        cadence=spec.eval_cadence, m=cfg.m,
        track_prox_grad=(cfg.variant == "nonconvex"))


def cmd_run(args):
    spec = build_spec(args)
    data = load_dataset(spec)
    train, test = split_train_test(data, spec)
    p = build_problem(spec, train)
    cfg = resolve_solver_config(spec, p)
    collector = _make_collector(spec, p, cfg, test)
    code = EXIT_OK
    try:
        solver.solve(p, cfg, observer=collector)
    except solver.DivergenceError as exc:
        print(f"run diverged: {exc}", file=sys.stderr)
        code = EXIT_DIVERGED
    out = open(spec.trace_out, "w") if spec.trace_out else sys.stdout
    try:
        write_trace(collector.records, out)
    finally:
        if spec.trace_out:
            out.close()
    return code


def cmd_rho_sweep(args):
    spec = build_spec(args)
    if not args.rhos:
        raise CliError("rho-sweep needs at least one --rhos value")
    data = load_dataset(spec)
    train, test = split_train_test(data, spec)
    p = build_problem(spec, train)
    base = spec.trace_out or "sweep"
    summary = []
    worst = EXIT_OK
    for rho in args.rhos:
        spec.rho = float(rho)
        cfg = resolve_solver_config(spec, p)
        collector = _make_collector(spec, p, cfg, test)
        try:
            solver.solve(p, cfg, observer=collector)
            code = EXIT_OK
        except solver.DivergenceError as exc:
            print(f"rho={rho}: diverged: {exc}", file=sys.stderr)
            code = EXIT_DIVERGED
        worst = max(worst, code)
        path = f"{base}_rho{rho}.csv"
        with open(path, "w") as fh:
            write_trace(collector.records, fh)
        final_obj = collector.records[-1].objective if collector.records else float("nan")
        summary.append((float(rho), final_obj, code))
    with open(f"{base}_summary.csv", "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rho", "final_objective", "exit_code"])
        for row in summary:
            w.writerow([_fmt(row[0]), _fmt(row[1]), row[2]])
    for rho, obj, code in summary:
        print(f"rho={_fmt(rho)} final_objective={_fmt(obj)} exit={code}")
    return worst


def cmd_reference(args):
    spec = build_spec(args)
    data = load_dataset(spec)
    train, _ = split_train_test(data, spec)
    p = build_problem(spec, train)
    if spec.loss == "sigmoid" and spec.l2 == 0:
        raise CliError("reference solve requires a convex problem")
    rho = spec.rho
    if rho is None:
        try:
            rho = advisor.rho_star(advisor.conditioning_from_problem(p))
        except advisor.AdvisorError:
            rho = 1.0
    ref = metrics.reference_solve(p, rho, tol=args.tol)
    if ref.quality > args.tol:
        print(f"reference did not reach tol: quality={ref.quality:.3e}",
              file=sys.stderr)
        return EXIT_CONFIG
    out = spec.trace_out or "reference.txt"
    save_reference(ref, out)
    print(f"reference written to {out} (quality={ref.quality:.3e})")
    return EXIT_OK


def cmd_gen_tv(args):
    data, x_true = problems.gen_tv_data(args.n, args.d, args.seed)
    with open(args.out, "w") as fh:
        problems.write_libsvm(data, fh)
    with open(args.out + ".truth", "w") as fh:
        for v in x_true:
            fh.write(f"{v:.17g}\n")
    print(f"wrote {args.n} samples to {args.out} (+ .truth sidecar)")
    return EXIT_OK


def cmd_advise(args):
    spec = build_spec(args)
    data = load_dataset(spec)
    train, _ = split_train_test(data, spec)
    p = build_problem(spec, train)
    cond = advisor.conditioning_from_problem(p)
    cfg = resolve_solver_config(spec, p)
    lines = []
    add = lambda k, v: lines.append(f"{k}={_fmt(v) if not isinstance(v, bool) else str(v).lower()}")
    add("n", cond.n)
    add("d", p.d)
    add("L_f", cond.L_f)
    add("L_max", cond.L_max)
    add("lambda_f", cond.lambda_f)
    add("sigma_max_AAt", cond.sigma_max_AAt)
    add("sigma_min_AAt", cond.sigma_min_AAt)
    add("beta", advisor.beta(cfg.b, cond.n))
    add("gamma_min", advisor.gamma_min(cfg.eta, cfg.rho, p.spectra.norm_AtA))
    if cond.lambda_f > 0:
        rho_s = advisor.rho_star(cond)
        eta_s, m_s, regime = advisor.eta_m_star(cond, args.kappa_target, cfg.b)
        kap = advisor.kappa(cond, eta_s, rho_s, cfg.b, m_s)
        add("rho_star", rho_s)
        add("kappa_target", args.kappa_target)
        add("eta_star", eta_s)
        add("m_star", m_s)
        add("b_star", advisor.batch_threshold(cond, args.kappa_target))
        add("regime", regime)
        add("kappa_at_star", kap)
        add("stages_expect",
            advisor.stages_needed(args.R0, args.epsilon, kap))
        add("stages_hp",
            advisor.stages_needed(args.R0, args.epsilon, kap, args.delta))
    elif spec.variant == "strongly_convex":
        print("error: lambda_f = 0; strongly-convex advice needs either the "
              "squared loss or an l2 term (--l2)", file=sys.stderr)
        return EXIT_CONFIG
    feasible, lhs = advisor.nc_condition_check(
        cond, cfg.eta, cfg.rho, cfg.m, cfg.b,
        update_mode=cfg.update_mode, gamma=cfg.gamma)
    add("nc_feasible", feasible)
    add("nc_lhs", lhs)
    try:
        C1, C2, C = advisor.nc_constants(cond, cfg.eta, cfg.rho,
                                         update_mode=cfg.update_mode,
                                         gamma=cfg.gamma)
        add("nc_C1", C1)
        add("nc_C2", C2)
        add("nc_C", C)
    except advisor.AdvisorError:
        add("nc_C1", float("nan"))
        add("nc_C2", float("nan"))
        add("nc_C", float("nan"))
    report = "\n".join(lines) + "\n"
    sys.stdout.write(report)
    return EXIT_OK


def cmd_compare(args):
    spec = build_spec(args)
    variants = args.variants or ["convex_logistic", "nonconvex_sigmoid"]
    bad = set(variants) - {"convex_logistic", "nonconvex_sigmoid"}
    if bad:
        raise CliError(f"unknown compare variants: {sorted(bad)}")
    if spec.test_data is None and spec.test_split == 0:
        spec.test_split = 0.5
    data = load_dataset(spec)
    train, test = split_train_test(data, spec)
    all_records = []
    finals = {}
    worst = EXIT_OK
    for name in variants:
        vspec = RunSpec(**vars(spec))
        if name == "convex_logistic":
            vspec.loss, vspec.variant = "logistic", "general_convex"
        else:
            vspec.loss, vspec.variant = "sigmoid", "nonconvex"
        p = build_problem(vspec, train)
        cfg = resolve_solver_config(vspec, p)
        collector = _make_collector(vspec, p, cfg, test)
        try:
            result = solver.solve(p, cfg, observer=collector)
            x_final = result.stage_points[-1][0] if result.stage_points else result.x_out
        except solver.DivergenceError as exc:
            print(f"{name}: diverged: {exc}", file=sys.stderr)
            worst = EXIT_DIVERGED
            x_final = None
        all_records.append((name, collector.records))
        if x_final is not None and test is not None:
            pred = np.sign(test.features @ x_final)
            pred[pred == 0] = 1.0
            finals[name] = float(np.mean(pred != test.labels))
    out = open(spec.trace_out, "w") if spec.trace_out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["variant"] + CSV_HEADER)
        for name, records in all_records:
            for rec in records:
                w.writerow([name, rec.stage, rec.iter, _fmt(rec.epochs),
                            _fmt(rec.time_s), _fmt(rec.objective),
                            _fmt(rec.feasibility), _fmt(rec.R),
                            _fmt(rec.prox_grad_sq), _fmt(rec.test_loss)])
    finally:
        if spec.trace_out:
            out.close()
    for name, err in finals.items():
        print(f"final_test_error.{name}={_fmt(err)}")
    return worst


def _add_spec_options(sp):
    sp.add_argument("--config")
    sp.add_argument("--problem", choices=["ggfl", "tv", "lasso"])
    sp.add_argument("--data")
    sp.add_argument("--loss", choices=["logistic", "squared", "sigmoid"])
    sp.add_argument("--lam", type=float, dest="lam")
    sp.add_argument("--l2", type=float)
    sp.add_argument("--edges")
    sp.add_argument("--corr-threshold", type=float, dest="corr_threshold")
    sp.add_argument("--eta", type=float)
    sp.add_argument("--rho", type=float)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--m", type=int)
    sp.add_argument("--b", type=int)
    sp.add_argument("--stages", type=int)
    sp.add_argument("--variant", choices=list(solver.VARIANTS))
    sp.add_argument("--update-mode", choices=list(solver.UPDATE_MODES),
                    dest="update_mode")
    sp.add_argument("--averaging", choices=list(solver.AVERAGING))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--warm-start", type=int, dest="warm_start")
    sp.add_argument("--trace-out", dest="trace_out")
    sp.add_argument("--test-data", dest="test_data")
    sp.add_argument("--test-split", type=float, dest="test_split")
    sp.add_argument("--eval-cadence", choices=["iter", "stage"],
                    dest="eval_cadence")
    sp.add_argument("--reference")


def make_parser():
    ap = argparse.ArgumentParser(prog="svradmm",
                                 description="Variance-reduced stochastic ADMM")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("advise", help="hyperparameter report")
    _add_spec_options(sp)
    sp.add_argument("--kappa-target", type=float, default=0.5,
                    dest="kappa_target")
    sp.add_argument("--R0", type=float, default=1.0, dest="R0")
    sp.add_argument("--epsilon", type=float, default=1e-3)
    sp.add_argument("--delta", type=float, default=0.01)
    sp.set_defaults(func=cmd_advise)

    sp = sub.add_parser("run", help="single solver run, CSV trace")
    _add_spec_options(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("rho-sweep", help="identical runs over a rho list")
    _add_spec_options(sp)
    sp.add_argument("--rhos", type=float, nargs="+")
    sp.set_defaults(func=cmd_rho_sweep)

    sp = sub.add_parser("reference", help="high-accuracy reference solve")
    _add_spec_options(sp)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.set_defaults(func=cmd_reference)

    sp = sub.add_parser("gen-tv", help="synthetic TV-regression dataset")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_tv)

    sp = sub.add_parser("compare", help="convex vs nonconvex model comparison")
    _add_spec_options(sp)
    sp.add_argument("--variants", nargs="+",
                    choices=["convex_logistic", "nonconvex_sigmoid"])
    sp.set_defaults(func=cmd_compare)
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, solver.ConfigError, problems.ProblemError,
            advisor.AdvisorError, metrics.MetricsError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
