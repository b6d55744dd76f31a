"""Experiment orchestration: configuration loading/validation, the
covariance and equalizer experiments, the model-only run, and the CSV
output contract.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import yaml

from . import __version__
from .analytic import (CovarianceMatrix, default_interferer_set, mc_oracle_cov,
                       nlpn_covariance, _TensorBuilder)
from .channel import FiberSpec, LinkSpec, StepPolicy, amplify, propagate_span, _span_seed
from .constellation import (Constellation, build_qam, draw_symbols, shape_mb)
from .equalize import (MODE_INDIVIDUAL, MODE_JOINT, MODE_NONE, WARMUP_SYMBOLS,
                       equalize_frame, frame_q)
from .rxdsp import (PhaseTrace, RxSymbols, cd_compensate, demux, empirical_cov,
                    extract_nlpn, normalize_gain)
from .waveform import EDGE_GUARD_SYMBOLS, ScmPlan, Waveform, assemble, modulate, rrc_taps

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(Exception):
    """Invalid experiment configuration (reported with the field path)."""


# Flat key-path schema: name -> (type, default).  Unknown keys are errors.
_SCHEMA = {
    "plan.n_channels": (int, 5),
    "plan.n_subcarriers": (int, 8),
    "plan.rolloff": (float, 0.1),
    "plan.samples_per_symbol": (int, 2),
    "plan.tap_span_symbols": (int, 32),
    "link.n_spans": (int, 10),
    "link.span_km": (float, 100.0),
    "link.alpha_db_km": (float, 0.2),
    "link.beta2_ps2_km": (float, -21.27),
    "link.gamma_w_km": (float, 1.3),
    "link.noise_figure_db": (float, 5.0),
    "link.ase_enabled": (bool, False),
    "constellation.order": (int, 64),
    "constellation.shaping_entropy_bits": (float, None),
    "power.grid_dbm": (list, [1.0]),
    "run.n_symbols": (int, 2**15),
    "run.seed": (int, 1234),
    "run.step_max_phase_rad": (float, 1e-3),
    "run.sample_rate_margin": (float, 1.25),
    "cov.span_counts": (list, None),
    "cov.compare_shaped": (bool, False),
    "eq.lambda_grid": (list, [0.90, 0.95, 0.98, 0.99, 0.995, 0.999]),
    "eq.modes": (list, [MODE_NONE, MODE_INDIVIDUAL, MODE_JOINT]),
    "eq.subcarrier_counts": (list, [2, 4, 8]),
    "analytic.interferer_set": (str, "all"),
    "analytic.z_nodes": (int, 64),
    "analytic.k_override": (int, None),
    "analytic.sps": (int, 16),
    "analytic.mc_symbols": (int, 10**6),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Schema-validated flat configuration."""

    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def hash(self) -> str:
        blob = json.dumps(self.values, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path: str | None = None, overrides: dict | None = None,
                seed_override: int | None = None) -> ExperimentConfig:
    raw = {}
    if path is not None:
        with open(path) as f:
            loaded = yaml.safe_load(f) or {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must be a flat key-value mapping")
        raw.update(loaded)
    if overrides:
        raw.update(overrides)
    values = {}
    for key, val in raw.items():
        if key not in _SCHEMA:
            raise ConfigError(f"{key}: unknown configuration key")
        typ, _ = _SCHEMA[key]
        if val is None:
            values[key] = None
            continue
        try:
            if typ is bool:
                if not isinstance(val, bool):
                    raise ValueError("expected true/false")
                values[key] = val
            elif typ is list:
                values[key] = list(val)
            else:
                values[key] = typ(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: {exc}") from exc
    for key, (_, default) in _SCHEMA.items():
        values.setdefault(key, default)
    if seed_override is not None:
        values["run.seed"] = int(seed_override)
    if values["cov.span_counts"] is None:
        values["cov.span_counts"] = [values["link.n_spans"]]
    _validate(values)
    return ExperimentConfig(values=values)


def _validate(v: dict) -> None:
    if v["plan.n_channels"] < 1 or v["plan.n_channels"] % 2 == 0:
        raise ConfigError("plan.n_channels: must be odd and >= 1 (central COI)")
    if v["plan.n_subcarriers"] < 1:
        raise ConfigError("plan.n_subcarriers: must be >= 1")
    if v["link.n_spans"] < 1:
        raise ConfigError("link.n_spans: must be >= 1")
    if max(v["cov.span_counts"]) > v["link.n_spans"]:
        raise ConfigError("cov.span_counts: entries must not exceed link.n_spans")
    if v["analytic.interferer_set"] not in ("all", "external"):
        raise ConfigError("analytic.interferer_set: must be 'all' or 'external'")
    for mode in v["eq.modes"]:
        if mode not in (MODE_NONE, MODE_INDIVIDUAL, MODE_JOINT):
            raise ConfigError(f"eq.modes: unknown mode {mode!r}")
    if not v["power.grid_dbm"]:
        raise ConfigError("power.grid_dbm: must be nonempty")


# ---------------------------------------------------------------------------
# shared building blocks

def _plan(cfg: ExperimentConfig, n_subcarriers: int | None = None) -> ScmPlan:
    return ScmPlan.grid_50ghz(
        n_channels=cfg["plan.n_channels"],
        n_subcarriers=n_subcarriers or cfg["plan.n_subcarriers"],
        rolloff=cfg["plan.rolloff"],
        samples_per_symbol=cfg["plan.samples_per_symbol"],
        tap_span_symbols=cfg["plan.tap_span_symbols"],
    )


def _link(cfg: ExperimentConfig, ase: bool | None = None) -> LinkSpec:
    return LinkSpec(
        fiber=FiberSpec(
            alpha_db_km=cfg["link.alpha_db_km"],
            beta2_ps2_km=cfg["link.beta2_ps2_km"],
            gamma_w_km=cfg["link.gamma_w_km"],
            span_km=cfg["link.span_km"],
        ),
        n_spans=cfg["link.n_spans"],
        amp_noise_figure_db=cfg["link.noise_figure_db"],
        ase_enabled=cfg["link.ase_enabled"] if ase is None else ase,
        ase_seed=cfg["run.seed"],
    )


def _constellation(cfg: ExperimentConfig, shaped: bool | None = None) -> Constellation:
    c = build_qam(cfg["constellation.order"])
    h = cfg["constellation.shaping_entropy_bits"]
    if shaped is True and h is None:
        raise ConfigError("constellation.shaping_entropy_bits: required for shaped run")
    if h is not None and shaped is not False:
        c = shape_mb(c, h)
    return c


def dbm_to_w(dbm: float) -> float:
    return 1e-3 * 10 ** (dbm / 10)


def _channel_seed(seed: int, channel: int) -> int:
    return int(np.random.SeedSequence((seed, 17, channel)).generate_state(1)[0])


def transmit(plan: ScmPlan, c: Constellation, n_symbols: int, seed: int,
             power_per_channel_w: float, margin: float = 1.25):
    """Draw symbols for every channel, modulate and assemble the WDM comb.

    Launch power per channel is split evenly over subcarriers and the two
    polarizations.  Returns (waveform, {channel: SymbolFrame}).
    """
    p_sc = power_per_channel_w / (2 * plan.n_subcarriers)
    taps = rrc_taps(plan.rolloff, plan.tap_span_symbols, plan.samples_per_symbol)
    fs = plan.simulation_rate(margin)
    frames = {}
    pieces = {}
    for ch in range(plan.n_channels):
        frame = draw_symbols(c, plan.n_subcarriers, n_symbols,
                             _channel_seed(seed, ch), baud=plan.subcarrier_baud)
        frames[ch] = frame
        for j in range(plan.n_subcarriers):
            samples = modulate(frame.symbols[j], taps,
                               plan.samples_per_symbol, power=p_sc)
            pieces[(ch, j)] = Waveform(
                samples=samples,
                sample_rate=plan.subcarrier_baud * plan.samples_per_symbol,
                launch_power_per_subcarrier=p_sc)
    return assemble(plan, pieces, sample_rate=fs), frames


def receive_coi(w: Waveform, plan: ScmPlan, link: LinkSpec,
                frame) -> RxSymbols:
    """CDC + demux + gain normalization of every COI subcarrier."""
    comp = cd_compensate(w, link)
    s = np.stack([demux(comp, plan, j) for j in range(plan.n_subcarriers)])
    return normalize_gain(s, frame.symbols)


def _trim(x: np.ndarray, guard: int = EDGE_GUARD_SYMBOLS) -> np.ndarray:
    return x[..., guard:-guard] if guard else x


# ---------------------------------------------------------------------------
# analytic covariance, parallel over interferers

def _cov_worker(args):
    (plan, link, c, p_sc, interferer, span_counts, k_override, z_nodes, sps) = args
    return nlpn_covariance(plan, link, c, p_sc, interferer_set=[interferer],
                           K=k_override, z_nodes=z_nodes, sps=sps,
                           span_counts=span_counts)


def analytic_cov(cfg: ExperimentConfig, plan: ScmPlan, link: LinkSpec,
                 c: Constellation, p_sc: float, span_counts: list[int],
                 threads: int = 1) -> dict[int, CovarianceMatrix]:
    """Closed-form covariance per span count, one interferer per task so the
    reduction order (and hence the output bytes) is thread-count invariant."""
    interferers = default_interferer_set(
        plan, include_intra=cfg["analytic.interferer_set"] == "all")
    args = [(plan, link, c, p_sc, q, span_counts, cfg["analytic.k_override"],
             cfg["analytic.z_nodes"], cfg["analytic.sps"]) for q in interferers]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(_cov_worker, args, chunksize=1))
    else:
        partials = [_cov_worker(a) for a in args]
    out = {}
    for n in span_counts:
        cov = sum(p[n].cov for p in partials)
        mean = sum(p[n].mean for p in partials)
        out[n] = CovarianceMatrix(cov=cov, mean=mean,
                                  meta={**partials[0][n].meta,
                                        "n_interferers": len(interferers)})
    return out


# ---------------------------------------------------------------------------
# file output

def _write_csv(path, header_cols, rows, provenance):
    with open(path, "w") as f:
        for key, val in provenance:
            f.write(f"# {key}: {val}\n")
        f.write(",".join(header_cols) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _provenance(cfg: ExperimentConfig):
    return [("config_hash", cfg.hash()), ("seed", cfg["run.seed"]),
            ("artifact_version", __version__)]


def _echo_config(cfg: ExperimentConfig, out_dir: str) -> None:
    with open(os.path.join(out_dir, "config_echo.yaml"), "w") as f:
        f.write(f"# config_hash: {cfg.hash()}\n")
        yaml.safe_dump(cfg.values, f, sort_keys=True)


# ---------------------------------------------------------------------------
# experiments

def run_cov_experiment(cfg: ExperimentConfig, out_dir: str,
                       threads: int = 1) -> list[str]:
    """Fig.1-style experiment: measure and predict the inter-subcarrier
    NLPN correlation, per span-count checkpoint.  ASE is off unless the
    config explicitly enables it (the measurement isolates NLPN)."""
    os.makedirs(out_dir, exist_ok=True)
    _echo_config(cfg, out_dir)
    plan = _plan(cfg)
    link = _link(cfg)
    span_counts = sorted(set(int(n) for n in cfg["cov.span_counts"]))
    power_dbm = cfg["power.grid_dbm"][0]
    p_ch = dbm_to_w(power_dbm)
    p_sc = p_ch / (2 * plan.n_subcarriers)
    policy = StepPolicy(max_phase_rad=cfg["run.step_max_phase_rad"])

    empirical = _simulate_cov_checkpoints(
        cfg, plan, link, _constellation(cfg, shaped=False), p_ch, span_counts, policy)
    analytic = analytic_cov(cfg, plan, link, _constellation(cfg, shaped=False),
                            p_sc, span_counts, threads)

    prov = _provenance(cfg)
    files = []
    n_top = span_counts[-1]
    ns = plan.n_subcarriers

    corr_emp = empirical[n_top].correlation()
    corr_ana = analytic[n_top].correlation()
    stderr = empirical[n_top].stderr
    rows = [(j + 1, corr_emp[0, j], corr_ana[0, j], stderr[0, j])
            for j in range(ns)]
    path = os.path.join(out_dir, "corr_vs_subcarrier.csv")
    _write_csv(path, ["subcarrier_index", "corr_empirical", "corr_analytic",
                      "stderr"], rows, prov)
    files.append(path)

    rows = []
    for n in span_counts:
        ce, ca = empirical[n].correlation(), analytic[n].correlation()
        rows.append((n, "adjacent", ce[0, 1], ca[0, 1]))
        rows.append((n, "farthest", ce[0, ns - 1], ca[0, ns - 1]))
    path = os.path.join(out_dir, "corr_vs_spans.csv")
    _write_csv(path, ["n_spans", "pair", "corr_empirical", "corr_analytic"],
               rows, prov)
    files.append(path)

    for n in span_counts:
        for tag, mat in (("empirical", empirical[n]), ("analytic", analytic[n])):
            p = os.path.join(out_dir, f"cov_{tag}_{n}spans.csv")
            mat.to_csv(p, "cov")
            files.append(p)

    if cfg["cov.compare_shaped"]:
        shaped = _constellation(cfg, shaped=True)
        emp_s = _simulate_cov_checkpoints(cfg, plan, link, shaped, p_ch,
                                          [n_top], policy)
        ana_s = analytic_cov(cfg, plan, link, shaped, p_sc, [n_top], threads)
        ce, ca = emp_s[n_top].correlation(), ana_s[n_top].correlation()
        se = emp_s[n_top].stderr
        rows = [(j + 1, ce[0, j], ca[0, j], se[0, j]) for j in range(ns)]
        path = os.path.join(out_dir, "corr_vs_subcarrier_shaped.csv")
        _write_csv(path, ["subcarrier_index", "corr_empirical",
                          "corr_analytic", "stderr"], rows, prov)
        files.append(path)
    return files


def _simulate_cov_checkpoints(cfg, plan, link, c, p_ch, span_counts,
                              policy) -> dict[int, CovarianceMatrix]:
    """One SSFM pass with receiver taps at the requested span counts."""
    w, frames = transmit(plan, c, cfg["run.n_symbols"], cfg["run.seed"], p_ch,
                         margin=cfg["run.sample_rate_margin"])
    coi_frame = frames[plan.coi_index]
    out = {}
    field = w
    for span in range(span_counts[-1]):
        field = propagate_span(field, link.fiber, policy)
        field = amplify(field, link.fiber.span_loss_db, link.amp_noise_figure_db,
                        ase_enabled=link.ase_enabled,
                        seed=_span_seed(link.ase_seed, span))
        n = span + 1
        if n not in span_counts:
            continue
        sub_link = LinkSpec(fiber=link.fiber, n_spans=n,
                            amp_noise_figure_db=link.amp_noise_figure_db)
        rx = receive_coi(field, plan, sub_link, coi_frame)
        trace = extract_nlpn(rx)
        trace = PhaseTrace(phi=_trim(trace.phi), meta=trace.meta)
        out[n] = empirical_cov(trace, bootstrap_seed=cfg["run.seed"])
    return out


def _eq_cell_worker(args):
    """Simulate one (n_subcarriers, power) cell and return the demuxed COI
    symbol streams (transmit -> link with ASE -> CDC -> demux)."""
    (cfg_values, n_subcarriers, power_dbm) = args
    cfg = ExperimentConfig(values=cfg_values)
    plan = _plan(cfg, n_subcarriers=n_subcarriers)
    link = _link(cfg, ase=True)
    c = _constellation(cfg)
    policy = StepPolicy(max_phase_rad=cfg["run.step_max_phase_rad"])
    from .channel import propagate_link
    w, frames = transmit(plan, c, cfg["run.n_symbols"], cfg["run.seed"],
                         dbm_to_w(power_dbm), margin=cfg["run.sample_rate_margin"])
    field = propagate_link(w, link, policy)
    rx = receive_coi(field, plan, link, frames[plan.coi_index])
    return (n_subcarriers, power_dbm, rx)


def run_eq_experiment(cfg: ExperimentConfig, out_dir: str,
                      threads: int = 1) -> list[str]:
    """Fig.2-style experiment: Q vs launch power for unequalized,
    individually equalized and jointly equalized reception."""
    os.makedirs(out_dir, exist_ok=True)
    _echo_config(cfg, out_dir)
    c = _constellation(cfg)
    sub_counts = sorted(int(n) for n in cfg["eq.subcarrier_counts"])
    powers = list(cfg["power.grid_dbm"])
    modes = list(cfg["eq.modes"])
    lambdas = sorted(cfg["eq.lambda_grid"])
    skip = WARMUP_SYMBOLS + EDGE_GUARD_SYMBOLS

    cells = [(cfg.values, ns, p) for ns in sub_counts for p in powers]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_eq_cell_worker, cells, chunksize=1))
    else:
        results = [_eq_cell_worker(cell) for cell in cells]

    rows = []
    peak = {}  # (ns, mode) -> best q
    for (ns, p_dbm, rx) in results:
        for mode in modes:
            lams = [float("nan")] if mode == MODE_NONE else lambdas
            for lam in lams:
                if mode == MODE_NONE:
                    rep = frame_q(rx, c, skip=skip)
                    lam_str = ""
                else:
                    out, _ = equalize_frame(rx, c, lam, mode)
                    rep = frame_q(out, c, skip=skip)
                    lam_str = _fmt(lam)
                rows.append((ns, mode, lam_str, p_dbm, rep.q_db))
                key = (ns, mode)
                peak[key] = max(peak.get(key, float("-inf")), rep.q_db)

    prov = _provenance(cfg)
    files = []
    path = os.path.join(out_dir, "q_vs_power.csv")
    _write_csv(path, ["n_subcarriers", "mode", "lambda", "power_dBm", "q_dB"],
               rows, prov)
    files.append(path)

    gain_rows = []
    for ns in sub_counts:
        base = peak.get((ns, MODE_NONE), float("nan"))
        indiv = peak.get((ns, MODE_INDIVIDUAL), float("nan"))
        joint = peak.get((ns, MODE_JOINT), float("nan"))
        gain_rows.append((ns, indiv - base, joint - indiv))
    path = os.path.join(out_dir, "peak_gain.csv")
    _write_csv(path, ["n_subcarriers", "individual_gain_dB",
                      "joint_added_gain_dB"], gain_rows, prov)
    files.append(path)
    return files


def run_model_only(cfg: ExperimentConfig, out_dir: str,
                   threads: int = 1) -> list[str]:
    """Analytic covariance vs the Monte-Carlo oracle, no fiber simulation."""
    os.makedirs(out_dir, exist_ok=True)
    _echo_config(cfg, out_dir)
    plan = _plan(cfg)
    link = _link(cfg)
    c = _constellation(cfg)
    p_sc = dbm_to_w(cfg["power.grid_dbm"][0]) / (2 * plan.n_subcarriers)
    closed = analytic_cov(cfg, plan, link, c, p_sc, [link.n_spans], threads)[
        link.n_spans]

    interferers = default_interferer_set(
        plan, include_intra=cfg["analytic.interferer_set"] == "all")
    ns = plan.n_subcarriers
    phis_cov = np.zeros((ns, ns))
    phis_mean = np.zeros(ns)
    for qi, q in enumerate(interferers):
        subs = [j for j in range(ns) if (plan.coi_index, j) != q]
        builder = _TensorBuilder(plan, link, q, subs,
                                 K=cfg["analytic.k_override"],
                                 z_nodes=cfg["analytic.z_nodes"],
                                 sps=cfg["analytic.sps"])
        acc = builder.zero()
        for s in range(link.n_spans):
            builder.add_span(acc, s)
        tensors = [builder.finish(acc)[j] for j in subs]
        mc = mc_oracle_cov(tensors, c, p_sc, cfg["analytic.mc_symbols"],
                           seed=int(np.random.SeedSequence(
                               (cfg["run.seed"], 31, qi)).generate_state(1)[0]))
        ii = np.array(subs)
        # 2x: two independent interfering polarization streams
        phis_cov[np.ix_(ii, ii)] += 2 * mc.cov
        phis_mean[ii] += 2 * mc.mean

    mc_mat = CovarianceMatrix(cov=phis_cov, mean=phis_mean,
                              meta={"kind": "mc_oracle",
                                    "n_symbols": cfg["analytic.mc_symbols"]})
    files = []
    for tag, mat in (("analytic", closed), ("mc", mc_mat)):
        for what in ("cov", "corr"):
            p = os.path.join(out_dir, f"{what}_{tag}.csv")
            mat.to_csv(p, what)
            files.append(p)
    diff = np.abs(closed.correlation() - mc_mat.correlation())
    path = os.path.join(out_dir, "corr_diff.csv")
    rows = [tuple(row) for row in diff]
    _write_csv(path, [f"sc{j+1}" for j in range(ns)], rows, _provenance(cfg))
    files.append(path)
    return files
