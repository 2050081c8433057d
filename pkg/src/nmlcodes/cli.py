"""Command-line driver: every command writes data tables plus a JSON sidecar."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import io as nio
from .core import (
    FrequencyProfile,
    SpinSample,
    default_L_grid,
    frequency_profile,
    mis_bound_curve,
    random_baseline_curve,
    resolution_relevance,
    spin_labels,
)
from .errors import BudgetExceededError, InvalidInputError, NMLError, NumericalError

OUT_ENV = "NMLCODES_OUT"
EXIT_OK, EXIT_USAGE, EXIT_BUDGET, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4, 5

log = logging.getLogger("nmlcodes")


def parse_grid(text: str) -> np.ndarray:
    """``min:max:step`` (inclusive), a comma list, or a single number."""
    try:
        if ":" in text:
            lo, hi, step = (float(x) for x in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError
            n = int(math.floor((hi - lo) / step + 1e-9)) + 1
            return np.round(lo + step * np.arange(n), 12)
        return np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; use min:max:step or a comma list") from None


def parse_int_list(text: str) -> list[int]:
    try:
        return [int(float(x)) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


class Outputs:
    """Writes files under one directory, each with a ``.meta.json`` sidecar."""

    def __init__(self, root: Path, config: dict):
        self.root = root
        self.config = config
        self.written: list[str] = []
        root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def done(self, name: str) -> None:
        meta = {"file": name, "version": __version__, "config": self.config}
        self.path(name + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        self.written.append(name)

    def json(self, name: str, data) -> None:
        self.path(name).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        self.done(name)


def _config(args) -> dict:
    skip = {"func", "out"}
    cfg = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        cfg[k] = v.tolist() if isinstance(v, np.ndarray) else v
    return cfg


def _require_seed(args) -> None:
    if args.seed is None:
        raise InvalidInputError("--seed is required for stochastic commands")


def _chain_config(args, beta: float = 0.0):
    from .nml_mcmc import ChainConfig

    return ChainConfig(r=args.r, burn_in=args.burn_in, thin=args.thin, steps=args.steps, beta=beta, seed=args.seed)


def _rr_row(profile: FrequencyProfile) -> dict:
    rr = resolution_relevance(profile)
    return {
        "N": rr.N,
        "H_s": rr.resolution,
        "H_k": rr.relevance,
        "H_s_norm": rr.resolution_norm,
        "H_k_norm": rr.relevance_norm,
        "kmax_over_N": profile.kmax / profile.N,
    }


def _pooled_degeneracy(profiles: list[FrequencyProfile]) -> list[tuple[int, float]]:
    total: Counter = Counter()
    for p in profiles:
        total.update(p.degeneracy)
    return [(k, total[k] / len(profiles)) for k in sorted(total)]


# --- sample -----------------------------------------------------------------------


def _dirichlet_rep(job):
    from .dirichlet import DirichletSpec, run_profile_chain
    from .nml_mcmc import ChainConfig

    S, N, beta, seed, steps = job
    spec = DirichletSpec(S, N)
    cfg = ChainConfig(burn_in=steps - 1, thin=1, steps=steps, seed=seed)
    return run_profile_chain(spec, beta, cfg).final


def _rep_seeds(seed: int, reps: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(reps)]


def _map(fn, jobs, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def cmd_sample(args, out: Outputs) -> None:
    _require_seed(args)
    if args.reps < 1:
        raise InvalidInputError("--reps must be >= 1")
    write_each = args.reps <= args.max_sample_files
    if args.model == "dirichlet":
        _sample_dirichlet(args, out, write_each)
    elif args.model == "paramagnet":
        _sample_paramagnet(args, out, write_each)
    else:
        _sample_chain(args, out, write_each)


def _sample_dirichlet(args, out, write_each):
    from .dirichlet import DirichletSpec, q_distribution, solve_saddle

    S, N = _need(args, "S"), _need(args, "N")
    spec = DirichletSpec(S, N)
    steps = args.steps if args.steps else 200 * N
    if args.method == "factorized":
        from .dirichlet import factorized_profiles

        results = factorized_profiles(spec, args.beta, args.reps, args.seed)
    else:
        jobs = [(S, N, args.beta, s, steps) for s in _rep_seeds(args.seed, args.reps)]
        results = _map(_dirichlet_rep, jobs, args.workers)
    profiles = [FrequencyProfile.from_counts(k) for k in results]

    summary = []
    for i, (k, p) in enumerate(zip(results, profiles)):
        if write_each:
            name = f"samples/profile_{i:05d}.csv"
            nio.write_profile(out.path(name), k)
            out.done(name)
        summary.append({"rep": i, **_rr_row(p)})
    freq = Counter(";".join(map(str, np.asarray(k).tolist())) for k in results)
    rows = [(key, c, c / args.reps) for key, c in sorted(freq.items())]
    nio.write_rows(out.path("profile_frequencies.csv"), ["profile", "count", "fraction"], rows)
    out.done("profile_frequencies.csv")

    kmax = max(int(np.max(k)) for k in results)
    counts = np.zeros(kmax + 1)
    for k in results:
        counts += np.bincount(np.asarray(k), minlength=kmax + 1)
    emp = counts / counts.sum()
    sol = solve_saddle(spec, args.beta)
    q = q_distribution(sol.z_star, args.beta, N)
    nio.write_rows(
        out.path("frequency_histogram.csv"),
        ["k", "empirical", "q"],
        ((k, emp[k], q[k]) for k in range(kmax + 1)),
    )
    out.done("frequency_histogram.csv")
    nio.write_rows(out.path("degeneracy_mean.csv"), ["k", "m_k"], _pooled_degeneracy(profiles))
    out.done("degeneracy_mean.csv")
    out.json("summary.json", {"model": "dirichlet", "S": S, "N": N, "z_star": sol.z_star, "samples": summary})


def _sample_paramagnet(args, out, write_each):
    from .spin import ParamagnetSpec

    spec = ParamagnetSpec(_need(args, "n"), _need(args, "N"))
    samples = _map(_paramagnet_rep, [(spec, s) for s in _rep_seeds(args.seed, args.reps)], args.workers)
    _write_spin_samples(args, out, samples, write_each, {"model": "paramagnet", "n": spec.n, "N": spec.N})


def _paramagnet_rep(job):
    from .spin import sample_paramagnet_nml

    spec, seed = job
    return sample_paramagnet_nml(spec, seed).spins


def _write_spin_samples(args, out, samples, write_each, header: dict, extra: dict | None = None):
    profiles = []
    summary = []
    for i, spins in enumerate(samples):
        ss = SpinSample(spins)
        p = frequency_profile(ss)
        profiles.append(p)
        if write_each:
            name = f"samples/spins_{i:05d}.csv"
            nio.write_spins(out.path(name), ss)
            out.done(name)
            name = f"samples/degeneracy_{i:05d}.csv"
            nio.write_degeneracy_table(out.path(name), p)
            out.done(name)
            name = f"samples/frequency_{i:05d}.csv"
            nio.write_frequency_table(out.path(name), Counter(spin_labels(ss.spins)))
            out.done(name)
        summary.append({"rep": i, **_rr_row(p)})
    nio.write_rows(out.path("degeneracy_mean.csv"), ["k", "m_k"], _pooled_degeneracy(profiles))
    out.done("degeneracy_mean.csv")
    out.json("summary.json", {**header, **(extra or {}), "samples": summary})


def _initial_spins(args, rng: np.random.Generator):
    """Chain start: a draw from the supplied parameters, or the fit-source sample."""
    if args.fit_source:
        return nio.read_spins(args.fit_source).spins, None
    if not args.params:
        raise InvalidInputError(f"--params or --fit-source is required for model {args.model}")
    params = nio.load_params(args.params)
    N = _need(args, "N")
    if args.model == "sk":
        from .models.sk import SKParams, _energies, all_spin_states

        if not isinstance(params, SKParams):
            raise InvalidInputError("parameter file is not an sk model")
        states = all_spin_states(params.n)
        e = _energies(params, states)
    else:
        from .models.rbm import RBMParams, all_visible_states, log_unnormalized

        if not isinstance(params, RBMParams):
            raise InvalidInputError("parameter file is not an rbm model")
        v = all_visible_states(params.n_visible)
        e = log_unnormalized(v, params)
        states = np.where(v > 0, 1, -1).astype(np.int8)
    p = np.exp(e - e.max())
    idx = rng.choice(len(p), size=N, p=p / p.sum())
    return states[idx], params


def _sample_chain(args, out, write_each):
    from .nml_mcmc import RBMModel, SKModel, run_chain

    rng = np.random.default_rng(args.seed)
    init, params = _initial_spins(args, rng)
    N, n = init.shape
    if args.model == "sk":
        model = SKModel(n)
    else:
        nh = args.n_hidden or (params.n_hidden if params is not None else None)
        if nh is None:
            raise InvalidInputError("--n-hidden is required for rbm")
        model = RBMModel(n, nh)
    if not args.steps:
        raise InvalidInputError("--steps is required for chain sampling")
    res = run_chain(model, N, _chain_config(args, args.beta), init=init)
    nio.write_chain_trace(out.path("chain_trace.csv"), res.records)
    out.done("chain_trace.csv")
    samples = res.samples[-args.reps :] if args.reps < len(res.samples) else res.samples
    extra = {"acceptance_rate": res.acceptance_rate, "fit_failures": res.fit_failures}
    _write_spin_samples(args, out, samples, write_each, {"model": args.model, "n": n, "N": N}, extra)


def _need(args, name):
    val = getattr(args, name, None)
    if val is None:
        raise InvalidInputError(f"--{name} is required for model {args.model}")
    return val


# --- analyze ------------------------------------------------------------------------


def cmd_analyze(args, out: Outputs) -> None:
    if args.spins:
        ss = nio.read_spins(args.input)
        profile = frequency_profile(ss)
        counts = Counter(spin_labels(ss.spins))
    else:
        sample = nio.read_sample(args.input)
        profile = frequency_profile(sample)
        counts = dict(profile.counts)
    nio.write_frequency_table(out.path("frequency.csv"), counts)
    out.done("frequency.csv")
    nio.write_rank_table(out.path("rank.csv"), profile)
    out.done("rank.csv")
    nio.write_degeneracy_table(out.path("degeneracy.csv"), profile)
    out.done("degeneracy.csv")
    row = _rr_row(profile)
    out.json("summary.json", row)
    print(json.dumps(row, sort_keys=True))


# --- complexity / mis / baseline ------------------------------------------------------


def cmd_complexity(args, out: Outputs) -> None:
    if args.model == "dirichlet":
        from .dirichlet import DirichletSpec, complexity_report

        report = complexity_report(DirichletSpec(_need(args, "S"), _need(args, "N")), args.method)
    else:
        from .core import LN2
        from .spin import ParamagnetSpec, paramagnet_complexity

        spec = ParamagnetSpec(_need(args, "n"), _need(args, "N"))
        if args.method not in ("exact", "asymptotic"):
            raise InvalidInputError("paramagnet complexity methods: exact, asymptotic")
        R = paramagnet_complexity(spec, args.method)
        report = {"n": spec.n, "N": spec.N, "method": args.method, "R_nats": R, "R_bits": R / LN2}
    out.json("complexity.json", report)
    print(json.dumps(report, sort_keys=True))


def cmd_mis(args, out: Outputs) -> None:
    if args.N < 2:
        raise InvalidInputError("N must be >= 2")
    pts = mis_bound_curve(args.N, args.mu)
    logN = math.log(args.N)
    rows = ((p.mu, p.resolution, p.relevance, p.resolution / logN, p.relevance / logN, int(p.zipf)) for p in pts)
    nio.write_rows(out.path("mis.csv"), ["mu", "H_s", "H_k", "H_s_norm", "H_k_norm", "zipf"], rows)
    out.done("mis.csv")


def cmd_baseline(args, out: Outputs) -> None:
    _require_seed(args)
    L = args.L if args.L else default_L_grid().tolist()
    pts = random_baseline_curve(args.N, L, args.reps, args.seed)
    logN = math.log(args.N)
    rows = ((p.L, p.resolution, p.relevance, p.resolution / logN, p.relevance / logN) for p in pts)
    nio.write_rows(out.path("baseline.csv"), ["L", "H_s", "H_k", "H_s_norm", "H_k_norm"], rows)
    out.done("baseline.csv")


# --- phi / scan ----------------------------------------------------------------------


def cmd_phi(args, out: Outputs) -> None:
    from .dirichlet import DirichletSpec
    from .largedev import phi_exact, phi_thermo_integration
    from .nml_mcmc import ParamagnetModel
    from .spin import ParamagnetSpec

    if args.model == "dirichlet":
        spec = DirichletSpec(_need(args, "S"), _need(args, "N"))
    else:
        spec = ParamagnetSpec(_need(args, "n"), _need(args, "N"))
    if args.method == "exact":
        curve = phi_exact(spec, args.beta)
    else:
        _require_seed(args)
        target = spec if args.model == "dirichlet" else (ParamagnetModel(spec.n), spec.N)
        curve = phi_thermo_integration(target, args.beta, _chain_config(args), workers=args.workers)
    nio.write_phi_curve(out.path("phi.csv"), curve)
    out.done("phi.csv")


def cmd_scan(args, out: Outputs) -> None:
    from .largedev import localization_scan
    from .nml_mcmc import ChainConfig

    _require_seed(args)
    rows = localization_scan(
        args.rho,
        args.beta,
        args.N,
        ChainConfig(seed=args.seed),
        reps=args.reps,
        steps_per_ball=args.steps_per_ball,
        workers=args.workers,
    )
    nio.write_scan_table(out.path("scan.csv"), rows)
    out.done("scan.csv")


# --- fit ---------------------------------------------------------------------------


def cmd_fit(args, out: Outputs) -> None:
    ss = nio.read_spins(args.input)
    if args.model == "sk":
        from .models.sk import sk_max_log_likelihood

        ll, params = sk_max_log_likelihood(ss.spins)
    else:
        from .models.rbm import CDConfig, rbm_fit_cd, rbm_log_likelihood, visible_from_spins

        _require_seed(args)
        if not args.n_hidden:
            raise InvalidInputError("--n-hidden is required for rbm")
        v = visible_from_spins(ss.spins)
        cfg = CDConfig(
            kappa=args.kappa, epsilon=args.epsilon, epochs=args.epochs, minibatches=args.minibatches, seed=args.seed
        )
        params = rbm_fit_cd(v, config=cfg, n_hidden=args.n_hidden)
        ll = rbm_log_likelihood(v, params)
    nio.save_params(out.path("params.json"), params)
    out.done("params.json")
    out.json("fit_summary.json", {"model": args.model, "N": ss.N, "n": ss.n, "loglik": ll})


# --- parser ----------------------------------------------------------------------------


def _chain_args(p, steps_default=None):
    p.add_argument("--r", type=int, default=1, help="observations flipped per proposal")
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--steps", type=int, default=steps_default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nmlcodes", description=__doc__)
    parser.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV} or .)")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw NML samples")
    p.add_argument("--model", required=True, choices=["dirichlet", "paramagnet", "sk", "rbm"])
    p.add_argument("--S", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--n-hidden", type=int)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--method", choices=["factorized", "exchange"], default="factorized")
    p.add_argument("--params", help="parameter JSON used to draw the chain's starting sample")
    p.add_argument("--fit-source", help="spin CSV used as the chain's starting sample")
    p.add_argument("--max-sample-files", type=int, default=1000)
    p.add_argument("--seed", type=int)
    _chain_args(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("analyze", help="resolution/relevance analysis of a sample file")
    p.add_argument("input")
    p.add_argument("--spins", action="store_true", help="input is a spin CSV")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("complexity", help="parametric complexity")
    p.add_argument("--model", required=True, choices=["dirichlet", "paramagnet"])
    p.add_argument("--S", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--method", default="exact", choices=["exact", "recursion", "saddle", "asymptotic"])
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("mis", help="maximally informative sample curve")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--mu", type=parse_grid, default=parse_grid("0.25:5:0.25"))
    p.set_defaults(func=cmd_mis)

    p = sub.add_parser("baseline", help="random-occupation baseline curve")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--L", type=parse_int_list)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("phi", help="large-deviation function of the resolution")
    p.add_argument("--model", required=True, choices=["dirichlet", "paramagnet"])
    p.add_argument("--S", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--method", choices=["exact", "ti"], default="exact")
    p.add_argument("--beta", type=parse_grid, default=parse_grid("-1:1:0.1"))
    p.add_argument("--seed", type=int)
    _chain_args(p, steps_default=200_000)
    p.set_defaults(func=cmd_phi)

    p = sub.add_parser("scan", help="localization scan of tilted Dirichlet samples")
    p.add_argument("--rho", type=float, default=10.0)
    p.add_argument("--N", type=parse_int_list, default=[10**4, 10**5])
    p.add_argument("--beta", type=parse_grid, default=parse_grid("-1:1:0.1"))
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--steps-per-ball", type=float, default=300.0)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("fit", help="fit an sk or rbm model to a spin CSV")
    p.add_argument("--model", required=True, choices=["sk", "rbm"])
    p.add_argument("--input", required=True)
    p.add_argument("--n-hidden", type=int)
    p.add_argument("--kappa", type=int, default=10)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=2500)
    p.add_argument("--minibatches", type=int, default=200)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_fit)
    return parser


def _join_negative_values(argv: list[str]) -> list[str]:
    # let "--beta -1:1:0.1" through argparse, which reads "-1:..." as an option
    out: list[str] = []
    for tok in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and re.match(r"^-[\d.]", tok):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_join_negative_values(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    root = args.out or Path(os.environ.get(OUT_ENV, "."))
    try:
        out = Outputs(Path(root), {"command": args.command, **_config(args)})
        args.func(args, out)
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NMLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
