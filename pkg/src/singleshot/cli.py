"""Command-line entry point: ``singleshot <command> [--model FILE] [flags]``.

Exit codes: 0 success, 1 invalid config, 2 infeasible request, 3 size cap.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ModelConfig, load_config
from .core import DiagonalState
from .errors import ConfigError, ContractError, InfeasibleError, SizeCapError
from .extraction import (
    max_work,
    multilevel_surplus,
    multilevel_surplus_direct,
    surplus_asymptote,
)
from .formation import formation_mu_epsilon
from .oracle import brute_force_formation, brute_force_max_work, second_law_sampler
from .report import make_report, render_csv, render_figures, render_json, series
from .shells import admissible_shells, enumerate_shells, truncation_tail
from .transfer import check_transfer
from .typicality import typicality_experiment

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_CAP = 0, 1, 2, 3

# used when --model is omitted: a doubly degenerate ground level prepared pure,
# so one grid quantum of work is extractable on a 2**n bath
DEFAULT_CONFIG = {
    "quantum": 1.0,
    "log_base": 2,
    "system": {"levels": [[0, 2]], "populations": [1, 0]},
    "bath": {"mode": "concrete", "base": 2, "max_level": 6},
    "weight": {"spacing": 1, "max_level": 1},
}

EPS_GRID = [round(0.05 * i, 2) for i in range(11)]


def _w_quanta(model, w):
    """Weight energy from ``--w`` as grid quanta; off-grid values are infeasible requests."""
    n = w / model.quantum
    if abs(n - round(n)) > 1e-9 * max(1.0, abs(n)):
        raise InfeasibleError(f"w = {w!r} is not a multiple of the quantum {model.quantum!r}")
    q = int(round(n))
    try:
        model.weight.level_of(q)
    except ContractError as err:
        raise InfeasibleError(str(err)) from None
    return q


def _level_label(key):
    return f"{key[0]},{key[1]}"


def cmd_validate(cfg: ModelConfig, model, args):
    results = {
        "valid": True,
        "mode": "concrete" if model.is_concrete else "ideal",
        "beta": model.ctx.beta,
        "system_dimension": model.system.dimension,
        "weight_levels": model.weight.max_level + 1,
    }
    tables = {}
    if model.is_concrete:
        shells = list(admissible_shells(model))
        results.update(base_k=model.base, admissible_window=[shells[0], shells[-1]],
                       truncation_tail=truncation_tail(model))
        tables["shells"] = {
            "columns": ["energy", "dimension", "population"],
            "rows": [[d.energy, d.dimension, float(d.population)] for d in enumerate_shells(model)],
        }
    return results, tables, {}


def cmd_work(cfg, model, args):
    rep = max_work(model, args.epsilon)
    results = {
        "mode": rep.mode,
        "epsilon": rep.epsilon,
        "w_max": rep.w_max,
        "w_max_t_form": rep.w_max_t_form,
        "f_min_epsilon": rep.f_min,
        "f_thermal": rep.f_thermal,
        "grid_level": rep.grid_level,
        "grid_achievable_w": rep.grid_achievable_w,
        "realized_failure": rep.realized_failure,
        "d_ini_epsilon": rep.d_ini_epsilon,
        "d_fin": rep.d_fin,
        "h_map": {_level_label(k): v for k, v in rep.h_map.items()},
    }
    tables = {}
    if rep.mode == "concrete":
        results["w_max_shells"] = rep.w_max_shells
        results["truncation_tail"] = truncation_tail(model)
        tables["shells"] = {
            "columns": ["energy", "d_ini_0", "d_ini_epsilon", "d_fin_at_grid_level", "realized_failure", "w_max_shell"],
            "rows": [[s.energy, s.d_ini_0, s.d_ini_epsilon, s.d_fin[rep.grid_quanta], s.realized_failure, s.w_max]
                     for s in rep.shells],
        }
    w_curve = [max_work(model, e).w_max for e in EPS_GRID]
    return results, tables, {"w_max_vs_epsilon": series(EPS_GRID, w_curve, "epsilon", "w_max")}


def cmd_formation(cfg, model, args):
    target = cfg.target_state()
    rep = formation_mu_epsilon(target, model.ctx, args.epsilon)
    results = {
        "epsilon": rep.epsilon,
        "mu": rep.mu,
        "w_min": rep.w_min,
        "binding_level": _level_label(rep.binding_level),
        "mu_epsilon": rep.mu_epsilon,
        "mu_epsilon_closed_form": rep.mu_epsilon_closed_form,
        "w_min_epsilon": rep.w_min_epsilon,
        "relaxed_state": rep.relaxed_state.probabilities(),
        "w_max_0_same_state": max_work(model.with_state(target), 0.0).w_max,
    }
    if model.is_concrete:
        try:
            bf = brute_force_formation(model, target)
            results["oracle"] = {"level": bf.level, "w": bf.w, "status": bf.status}
        except SizeCapError as err:
            results["oracle"] = {"status": f"skipped: {err}"}
    curve = [formation_mu_epsilon(target, model.ctx, e).w_min_epsilon for e in EPS_GRID]
    return results, {}, {"w_min_vs_epsilon": series(EPS_GRID, curve, "epsilon", "w_min_epsilon")}


def cmd_multilevel(cfg, model, args):
    spacing = model.weight.spacing_quanta * model.quantum
    delta = args.delta if args.delta is not None else spacing * model.weight.max_level
    base = max_work(model, args.epsilon)
    surplus = multilevel_surplus(model.ctx, delta, spacing)
    results = {
        "epsilon": args.epsilon,
        "delta": delta,
        "spacing": spacing,
        "surplus": surplus,
        "surplus_direct": multilevel_surplus_direct(model.ctx, delta, spacing),
        "surplus_asymptote": surplus_asymptote(model.ctx, spacing),
        "w_max_epsilon": base.w_max,
        "w_tilde_max_epsilon": base.w_max + surplus,
    }
    n = int(round(delta / spacing))
    steps = np.unique(np.linspace(0, n, min(n, 200) + 1).round().astype(int))
    xs = [float(s * spacing) for s in steps]
    ys = [multilevel_surplus(model.ctx, x, spacing) for x in xs]
    ref = [results["surplus_asymptote"]] * len(xs)
    return results, {}, {"surplus_vs_delta": series(xs, ys, "delta", "surplus", reference=("asymptote", ref))}


def cmd_transfer(cfg, model, args):
    if cfg.transfer is None:
        raise ConfigError("transfer-check needs a 'transfer' section in the config")
    w_spec = model.weight.spectrum(model.quantum)
    try:
        final_s = DiagonalState(model.system, cfg.transfer["system_final"])
        sw0 = DiagonalState(w_spec, cfg.transfer["weight_initial"])
        sw1 = DiagonalState(w_spec, cfg.transfer["weight_final"])
    except ContractError as err:
        raise ConfigError(f"transfer: {err}") from None
    v = check_transfer(model.state, final_s, model.system, sw0, sw1, w_spec, model.ctx)
    results = {
        "transfer_quantity": v.transfer_quantity,
        "bound": v.bound,
        "margin": v.margin,
        "allowed": v.allowed,
        "verdict": v.label,
        "case": v.case_tag,
    }
    return results, {}, {}


def cmd_typicality(cfg, model, args):
    model.require_concrete()
    if args.w is None:
        w_q = max_work(model, args.epsilon).grid_quanta
    else:
        w_q = _w_quanta(model, args.w)
    rep = typicality_experiment(model, args.epsilon, w_q, args.samples, args.seed)
    exponent, prefactor = rep.scaling_fit()
    results = {
        "epsilon": rep.epsilon,
        "w": w_q * model.quantum,
        "n_samples": rep.n_samples,
        "shells": rep.energies,
        "sigma_s_mean": rep.sigma_s_mean,
        "sigma_s_standard_error": rep.sigma_s_se,
        "sigma_s_haar_average": rep.sigma_s_prediction,
        "gibbs": rep.gibbs,
        "gibbs_z_scores": rep.gibbs_z_scores(),
        "scaling_exponent": exponent,
        "scaling_prefactor": prefactor,
        "sigma_s_offdiag_rms": rep.sigma_s_offdiag_rms,
        "offdiag_exponent": rep.offdiag_fit()[0],
        "entropy_drift_first_sample": rep.max_entropy_drift,
        "min_weight_mass": rep.min_weight_mass,
    }
    tables = {"fluctuations": {
        "columns": ["energy", "level", "bath_multiplicity", "mean", "std", "rel_std", "haar_mean"],
        "rows": [[e.energy, _level_label(e.level), e.bath_multiplicity, e.mean, e.std, e.rel_std, e.predicted_mean]
                 for e in rep.entries],
    }}
    tables["coherences"] = {
        "columns": ["bath_multiplicity", "relative_rms"],
        "rows": [list(p) for p in rep.offdiag_scaling()],
    }
    by_m = {}
    for e in rep.entries:
        if e.fluctuates:
            by_m.setdefault(e.bath_multiplicity, []).append(e.rel_std)
    ms = sorted(by_m)
    curves = {}
    if ms:
        curves["rel_std_vs_bath_multiplicity"] = series(
            ms, [float(np.mean(by_m[m])) for m in ms], "M_B", "std/mean",
            log_x=True, log_y=True, reference=("1/sqrt(M_B)", [1 / math.sqrt(m) for m in ms]),
        )
    return results, tables, curves


def cmd_oracle(cfg, model, args):
    model.require_concrete()
    bf = brute_force_max_work(model, args.epsilon)
    analytic = max_work(model, args.epsilon)
    sl = second_law_sampler(model, args.samples, args.seed)
    results = {
        "epsilon": args.epsilon,
        "brute_force_level": bf.level,
        "brute_force_w": bf.w,
        "grid_achievable_w": analytic.grid_achievable_w,
        "agree": bf.level == analytic.grid_level,
        "second_law_samples": sl.n_samples,
        "second_law_max_statistic": sl.max_statistic,
        "second_law_mean_statistic": sl.mean_statistic,
        "second_law_saturated_samples": sl.saturated_samples,
    }
    tables = {"shells": {
        "columns": ["energy", "d_ini_epsilon", "d_fin", "feasible", "trace_error"],
        "rows": [[e, v.d_ini, v.d_fin, v.feasible, v.trace_error] for e, v in sorted(bf.verdicts.items())],
    }}
    return results, tables, {}


COMMANDS = {
    "validate": cmd_validate,
    "work": cmd_work,
    "formation": cmd_formation,
    "multilevel": cmd_multilevel,
    "transfer-check": cmd_transfer,
    "typicality": cmd_typicality,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="singleshot", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        c = sub.add_parser(name)
        c.add_argument("--model", type=Path, help="YAML model config (default: built-in demo model)")
        c.add_argument("--epsilon", type=float, default=0.0, help="failure probability / trace-distance budget")
        c.add_argument("--delta", type=float, help="width of the final weight window (energy units)")
        c.add_argument("--w", type=float, help="weight lift in energy units (on the grid)")
        c.add_argument("--samples", type=int, default=500)
        c.add_argument("--seed", type=int, default=0)
        c.add_argument("--output", choices=["json", "csv"], default="json")
        c.add_argument("--out", type=Path, help="write the report here instead of stdout")
        c.add_argument("--figures", type=Path, metavar="DIR", help="also render each series as a PNG into DIR")
    return p


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.model) if args.model else ModelConfig.from_dict(DEFAULT_CONFIG)
        model = cfg.build()
    except ConfigError as err:
        print(f"invalid config: {err}", file=sys.stderr)
        return EXIT_CONFIG
    flags = {k: getattr(args, k) for k in ("epsilon", "delta", "w", "samples", "seed")}
    try:
        results, tables, curves = COMMANDS[args.command](cfg, model, args)
    except ConfigError as err:
        print(f"invalid config: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SizeCapError as err:
        print(f"size cap exceeded: {err}", file=sys.stderr)
        return EXIT_CAP
    except (InfeasibleError, ContractError) as err:
        print(f"infeasible request: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    report = make_report(args.command, __version__, cfg.to_dict(), cfg.sha256(), flags, results, tables, curves)
    text = render_json(report) if args.output == "json" else render_csv(report)
    if args.out:
        args.out.write_text(text)
    else:
        stdout.write(text)
    if args.figures:
        render_figures(report, args.figures)
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
