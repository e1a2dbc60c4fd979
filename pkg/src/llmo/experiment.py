"""Config-driven experiment pipelines and the theory verification suite."""

from __future__ import annotations

import glob
import json
import logging
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__, markov
from .agents import ExploringAgent, HttpLlmAgent, HttpLlmAgentConfig, RandomAgent, SyntheticAgent
from .baselines import BoConfig, GaConfig, brute_force, dinkelbach_ee, multi_start, run_bo, run_ga, wmmse
from .config import ExperimentConfig
from .errors import ConfigError, FitError, ModelError
from .grid import Grid
from .optimizer import LlmoConfig, run_llmo
from .population import Box, Population, SamplerKind
from .prompt import SUM_POWER_CONSTRAINT
from .rewards import (
    BcModel,
    IfcModel,
    MmimoModel,
    bc_penalized,
    bc_se,
    grid_reward_table,
    ifc_ee,
    ifc_se,
    mmimo_ee,
    rayleigh_channels,
    sum_power_violation,
)
from .trace import ExperimentTrace, IterationRecord, atomic_write, read_csv

log = logging.getLogger(__name__)


@dataclass
class Scenario:
    reward: object
    box: Box
    violation: object = None
    constraint_text: str | None = None
    reference: float | None = None  # best known reward (exhaustive or multi-start)
    local: object = None  # () -> MultiStartResult of the scenario's local solver


def build_scenario(cfg: ExperimentConfig, fixture: int) -> Scenario:
    D = cfg.D
    seed = [cfg.channel_seed, fixture]
    if cfg.scenario in ("ifc-ee", "ifc-se", "synthetic-grid"):
        model = IfcModel(rayleigh_channels((D, D), seed), P_tx=cfg.P_tx, P_fix=cfg.P_fix)
        se = cfg.scenario == "ifc-se"
        fn = ifc_se if se else ifc_ee
        reward = lambda x, m=model, f=fn: float(f(x, m))
        solver = wmmse if se else dinkelbach_ee
        local = lambda: multi_start(lambda x0: solver(model, x0), 50, fixture, D=D)
        ref = None
        if cfg.reference:
            ref = grid_reward_table(reward, cfg.levels, D).best if cfg.levels is not None else local().value
        return Scenario(reward, Box.uniform(D), reference=ref, local=local)
    if cfg.scenario == "bc-se":
        model = BcModel(rayleigh_channels(D, seed), P_tx=cfg.P_tx)
        if cfg.constraint == "penalty":
            reward = lambda x, m=model: float(bc_penalized(x, m))
        else:
            reward = lambda x, m=model: float(bc_se(x, m))
        text = SUM_POWER_CONSTRAINT if cfg.constraint == "language" else None
        local = lambda: multi_start(lambda x0: wmmse(model, x0 / max(1.0, x0.sum())), 50, fixture, D=D)
        ref = local().value if cfg.reference else None
        return Scenario(reward, Box.uniform(D), lambda x: float(sum_power_violation(x)), text, ref, local)
    if cfg.scenario == "mmimo-ee":
        model = MmimoModel()
        lo, hi = model.bounds

        def reward(x, m=model, s=fixture):
            try:
                return mmimo_ee(x, m, seed=s)
            except ModelError:
                return 0.0  # K > M: no admissible configuration, no efficiency

        return Scenario(reward, Box(lo, hi))
    raise ConfigError([f"scenario: unknown {cfg.scenario!r}"])


def _synthetic_policy(cfg: ExperimentConfig, spec, scenario: Scenario) -> SyntheticAgent:
    grid = Grid(cfg.levels, cfg.P, cfg.D, tuple(scenario.box.x_min), tuple(scenario.box.x_max))
    space = markov.enumerate_and_order(grid, scenario.reward)
    rng = np.random.default_rng(spec.policy_seed)
    S = grid.n_states
    # successors with better example sets get a logit bonus; the rest is noise
    quality = np.empty(S)
    quality[space.order] = np.linspace(1.0, 0.0, S)
    logits = 2.0 * quality[:, None] + rng.standard_normal((S, S))
    return SyntheticAgent.from_logits(grid, logits, spec.alpha, spec.top_k, name=f"synthetic-{spec.policy_seed}")


def build_agents(cfg: ExperimentConfig, scenario: Scenario, specs=None, allow_network=False):
    agents = []
    for spec in specs or cfg.agents:
        if spec.kind == "http":
            if not allow_network:
                raise ConfigError(["http agents need --allow-network"])
            agent = HttpLlmAgent(HttpLlmAgentConfig(
                spec.endpoint, spec.model, spec.temperature, spec.retries, spec.timeout,
                spec.api_key_env, integer_mode=spec.integer_mode,
            ))
        elif spec.kind == "synthetic":
            agent = _synthetic_policy(cfg, spec, scenario)
        elif spec.kind == "exploring":
            agent = ExploringAgent(cfg.levels, spec.epsilon, spec.step, spec.sigma, spec.alpha)
        else:
            agent = RandomAgent(cfg.levels)
        agents.extend([agent] * spec.count)
    return agents


# --- running ---------------------------------------------------------------------------------


def _schemes(cfg: ExperimentConfig):
    """``(name, kind, options)`` for every curve the config asks for."""
    out = [(f"llmo-{s}", "llmo", {"sampler": s, "specs": None}) for s in cfg.samplers]
    for L in cfg.L_sweep:
        spec = cfg.agents[0]
        specs = [type(spec)(**{**vars(spec), "count": L})]
        out.append((f"llmo-elitist-L{L}", "llmo", {"sampler": "elitist", "specs": specs}))
    for b in cfg.baselines:
        out.append((b, b, {}))
    return out


def _run_one(cfg, scheme, kind, opts, seed, fixture, allow_network):
    sc = build_scenario(cfg, fixture)
    run_seed = [seed, fixture]
    meta = {"config_hash": cfg.hash(), "scheme": scheme, "seed": seed, "fixture": fixture, "reference": sc.reference}
    if kind == "llmo":
        agents = build_agents(cfg, sc, opts["specs"], allow_network)
        lc = LlmoConfig(cfg.P, sc.box, cfg.levels, cfg.retries, sc.constraint_text, sc.violation,
                        keep_populations=cfg.dump_populations)
        trace = run_llmo(lc, agents, sc.reward, opts["sampler"], cfg.T, run_seed,
                         metadata=meta)
        trace.metadata["seed"] = seed
        return trace
    if kind == "local":
        trace = _local_trace(cfg, sc)
        trace.metadata.update(meta)
        return trace
    L = cfg.L
    entropy = int(np.random.SeedSequence(run_seed).generate_state(1)[0])
    if kind == "brute-force":
        trace = brute_force(L * cfg.P, sc.reward, sc.box, cfg.T, seed=entropy, violation=sc.violation)
    else:
        # L independent trials, best-so-far taken across them
        runs = []
        for l in range(L):
            if kind == "ga":
                runs.append(run_ga(GaConfig(cfg.P, seed=entropy + l), sc.reward, sc.box, cfg.T, violation=sc.violation))
            else:
                runs.append(run_bo(BoConfig(cfg.P, seed=entropy + l), sc.reward, sc.box, cfg.T, violation=sc.violation))
        trace = runs[int(np.argmax([r.best_rewards[-1] for r in runs]))]
        best = np.max([r.best_rewards for r in runs], axis=0)
        for rec, b in zip(trace.records, best):
            rec.best_reward = float(b)
        trace.metadata["evaluations"] = sum(r.metadata["evaluations"] for r in runs)
    trace.metadata.update(meta)
    return trace


def _local_trace(cfg, sc: Scenario) -> ExperimentTrace:
    """Multi-start local optimum drawn as a flat comparator curve."""
    res = sc.local()
    r = float(sc.reward(res.x))
    v = 0.0 if sc.violation is None else float(sc.violation(res.x))
    pop = Population(res.x.reshape(1, -1), np.array([r]))
    trace = ExperimentTrace(metadata={"method": "local", "local_value": res.value,
                                      "evaluations": int(len(res.values))})
    for t in range(1, cfg.T + 1):
        trace.records.append(IterationRecord(t, r, r, v, 0, 0, population=pop))
    return trace


def _check_output_dir(out, h):
    marker = os.path.join(out, "config.yaml")
    if os.path.exists(marker):
        with open(marker) as fh:
            first = fh.readline().strip()
        if first != f"# config_hash: {h}":
            raise ConfigError([f"{out} holds results of a different config ({first[2:]}); refusing to mix"])


def run_experiment(cfg: ExperimentConfig, out=None, allow_network=False) -> dict:
    """Run every scheme over all seeds and fixtures; write traces and aggregates."""
    out = out or cfg.output
    allow_network = allow_network or cfg.allow_network
    if any(a.kind == "http" for a in cfg.agents) and not allow_network:
        raise ConfigError(["http agents need --allow-network"])
    h = cfg.hash()
    _check_output_dir(out, h)
    started = time.time()
    atomic_write(os.path.join(out, "config.yaml"), f"# config_hash: {h}\n" + cfg.to_yaml())
    jobs = [(name, kind, opts, s, f)
            for name, kind, opts in _schemes(cfg) for s in cfg.seeds for f in range(cfg.fixtures)]

    def work(job):
        name, kind, opts, s, f = job
        trace = _run_one(cfg, name, kind, opts, s, f, allow_network)
        trace.write(os.path.join(out, "runs", name), f"s{s}_f{f}", populations=cfg.dump_populations)
        return name, trace

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            done = list(pool.map(work, jobs))
    else:
        done = [work(j) for j in jobs]
    by_scheme: dict[str, list] = {}
    for name, trace in done:
        by_scheme.setdefault(name, []).append(trace)
    files = {}
    rates = {}
    for name, traces in by_scheme.items():
        agg, fit = aggregate(traces, h)
        path = os.path.join(out, f"aggregate_{name}.csv")
        atomic_write(path, agg)
        files[name] = path
        if fit is not None:
            rates[name] = fit
    atomic_write(os.path.join(out, "rates.json"), json.dumps({"config_hash": h, "fits": rates}, indent=1, sort_keys=True) + "\n")
    if cfg.L_sweep:
        atomic_write(os.path.join(out, "acr_vs_L.csv"), _acr_vs_l(out, cfg, h))
    summary = {
        "config_hash": h,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_time_s": round(time.time() - started, 3),
        "schemes": sorted(by_scheme),
        "runs": len(jobs),
    }
    atomic_write(os.path.join(out, "summary.json"), json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return {"files": files, "summary": summary, "rates": rates}


AGG_COLUMNS = ("t", "mean_best_reward", "std_best_reward", "mean_reward", "mean_violation", "mean_gap", "gamma")


def aggregate(traces, h) -> tuple[str, dict | None]:
    """Mean curves over runs, plus a semilog fit of the mean gap when a reference exists."""
    best = np.array([tr.best_rewards for tr in traces])
    mean_r = np.array([tr.column("mean_reward") for tr in traces])
    viol = np.array([tr.column("violation") for tr in traces])
    refs = [tr.metadata.get("reference") for tr in traces]
    T = best.shape[1]
    gap = np.full(T, np.nan)
    gamma = np.full(T, np.nan)
    fit = None
    if all(r is not None for r in refs):
        ref = np.array(refs, dtype=float)[:, None]
        gap = np.maximum(ref - best, 0.0).mean(axis=0)
        init = [tr.metadata.get("initial_best") for tr in traces]
        if all(v is not None for v in init):
            gap0 = float(np.maximum(ref[:, 0] - np.array(init, dtype=float), 0.0).mean())
            if gap0 > 0:
                gamma = markov.acr_from_gaps(np.concatenate([[gap0], gap]))
        try:
            f = markov.fit_semilog_slope(np.arange(1, T + 1), gap)
            fit = {"slope": f.slope, "intercept": f.intercept, "r2": f.r2, "reliable": f.reliable}
        except markov.FitError:  # too few positive gaps
            fit = None
    with np.errstate(invalid="ignore"):
        mr = np.nanmean(mean_r, axis=0) if np.any(np.isfinite(mean_r)) else np.full(T, np.nan)
    lines = [f"# config_hash: {h}", ",".join(AGG_COLUMNS)]
    for t in range(T):
        row = [best[:, t].mean(), best[:, t].std(), mr[t], viol[:, t].mean(), gap[t], gamma[t]]
        lines.append(f"{t + 1}," + ",".join("nan" if np.isnan(v) else repr(float(v)) for v in row))
    return "\n".join(lines) + "\n", fit


def _acr_vs_l(out, cfg, h) -> str:
    lines = [f"# config_hash: {h}", "L,gamma_T,slope,r2"]
    for L in cfg.L_sweep:
        _, cols = read_csv(os.path.join(out, f"aggregate_llmo-elitist-L{L}.csv"))
        g = cols["gamma"][-1]
        try:
            f = markov.fit_semilog_slope(cols["t"], cols["mean_gap"])
            s, r2 = repr(f.slope), repr(f.r2)
        except markov.FitError:
            s, r2 = "nan", "nan"
        lines.append(f"{L},{'nan' if np.isnan(g) else repr(float(g))},{s},{r2}")
    return "\n".join(lines) + "\n"


# --- analysis --------------------------------------------------------------------------------


def analyze_rates(directory, min_r2=0.99) -> dict:
    """Semilog gap fits for every aggregate curve in ``directory``.

    L-sweep curves (``aggregate_llmo-elitist-L<L>.csv``) additionally get the
    measured-vs-predicted slope ratio ``slope(L) / slope(L0)`` against ``L / L0``.
    Refuses directories whose files carry different config hashes.
    """
    paths = sorted(glob.glob(os.path.join(directory, "aggregate_*.csv")))
    if not paths:
        raise FileNotFoundError(f"no aggregate_*.csv files in {directory}")
    hashes = {}
    fits = {}
    for p in paths:
        h, cols = read_csv(p)
        hashes[p] = h
        name = os.path.basename(p)[len("aggregate_"):-4]
        try:
            f = markov.fit_semilog_slope(cols["t"], cols["mean_gap"], min_r2)
        except FitError as exc:  # gap vanished (or no reference) before 5 points
            fits[name] = {"slope": None, "raw_slope": None, "r2": None, "reliable": False, "error": str(exc)}
            continue
        fits[name] = {"slope": f.slope if f.reliable else None, "raw_slope": f.slope, "r2": f.r2, "reliable": f.reliable}
    if len(set(hashes.values())) > 1:
        raise ConfigError([f"{os.path.basename(p)} has config hash {h}" for p, h in hashes.items()]
                          + ["mixed configurations in one directory; refusing to analyse"])
    sweep = sorted((int(n.split("-L")[-1]), n) for n in fits if n.startswith("llmo-elitist-L"))
    report = {"config_hash": next(iter(hashes.values())), "fits": fits}
    if sweep:
        L0, n0 = sweep[0]
        base = fits[n0]["raw_slope"]
        ratio = lambda v: None if v is None or base is None else v / base
        report["L_sweep"] = [
            {"L": L, "slope": fits[n]["raw_slope"], "measured_ratio": ratio(fits[n]["raw_slope"]),
             "predicted_ratio": L / L0, "r2": fits[n]["r2"]}
            for L, n in sweep
        ]
    return report


# --- theory suite ------------------------------------------------------------------------------


def theory_space(cfg: ExperimentConfig):
    t = cfg.theory
    grid = Grid.unit(t.levels, t.P, t.D)
    H = np.eye(1) if t.D == 1 else rayleigh_channels((t.D, t.D), cfg.channel_seed)
    model = IfcModel(H, P_tx=cfg.P_tx, P_fix=cfg.P_fix)
    return markov.enumerate_and_order(grid, lambda x: float(ifc_ee(x, model)))


def verify_theory(cfg: ExperimentConfig, out=None) -> dict:
    """Run the Markov-lab checks; every entry carries a ``passed`` verdict."""
    t = cfg.theory
    space = theory_space(cfg)
    rng = np.random.default_rng(t.policy_seed)
    policies = [SyntheticAgent.random(space.grid, rng) for _ in range(t.policies)]
    report = {"config_hash": cfg.hash(), "states": space.size, "optimal_states": space.n_optimal}

    t0 = time.time()
    elit = [markov.build_single_transition(space, p, "elitist") for p in policies]
    lifo = [markov.build_single_transition(space, p, "lifo") for p in policies]
    s_e = [markov.check_structure(m) for m in elit]
    s_l = [markov.check_structure(m) for m in lifo]
    elapsed = time.time() - t0
    report["structure"] = {
        "elitist_ok": [r.elitist_ok for r in s_e],
        "lifo_positive": [r.lifo_ok for r in s_l],
        "rho_p4": [r.rho_p4 for r in s_e],
        "seconds": elapsed,
        "passed": all(r.elitist_ok for r in s_e) and all(r.lifo_ok for r in s_l) and elapsed < 60,
    }

    pi0 = markov.initial_distribution(space)
    hits, stat = [], []
    for m, ml in zip(elit, lifo):
        _, om = markov.propagate(m, pi0, t.horizon)
        reached = np.flatnonzero(om >= 1 - 1e-6)
        hits.append(int(reached[0]) if reached.size else None)
        stat.append(float(markov.stationary_distribution(ml)[: space.n_optimal].sum()))
    report["convergence"] = {
        "elitist_hitting_time": hits,
        "lifo_stationary_optimal_mass": stat,
        "passed": all(h is not None for h in hits) and all(s < 1 - 1e-3 for s in stat),
    }

    rates = [markov.verify_rate_laws(m, T=t.T) for m in elit]
    report["eigen_init"] = {
        "q_max": [r.q_max for r in rates],
        "gamma_error": [r.gamma_error for r in rates],
        "ratio_error": [r.ratio_error for r in rates],
        "passed": all(r.ok(1e-10) for r in rates),
    }

    laws = []
    for p in policies:
        e = markov.ensemble_rate_law(space, p, t.L, t.T, init="eigen")
        u = markov.ensemble_rate_law(space, p, t.L, t.T, init="uniform", fit_from=t.T // 2)
        laws.append((e, u))
    report["ensemble"] = {
        "L": list(t.L),
        "q_error": [e.q_error for e, _ in laws],
        "slope_rel_error_eigen": [e.slope_rel_error for e, _ in laws],
        "slope_rel_error_uniform": [u.slope_rel_error for _, u in laws],
        "passed": all(e.q_error <= 1e-12 and e.slope_rel_error <= 0.05 and u.slope_rel_error <= 0.05
                      for e, u in laws),
    }

    mc = markov.monte_carlo_validate(elit[0], [policies[0]], N=t.mc_runs, T=t.T, seed=t.mc_seed)
    report["monte_carlo"] = mc.summary()

    report["passed"] = all(report[k]["passed"] for k in ("structure", "convergence", "eigen_init", "ensemble", "monte_carlo"))
    if out:
        atomic_write(os.path.join(out, "theory_report.json"), json.dumps(report, indent=1, sort_keys=True, default=float) + "\n")
        atomic_write(os.path.join(out, "gap_eigen.csv"), rates[0].to_csv())
    return report
