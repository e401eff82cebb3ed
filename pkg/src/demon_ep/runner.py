"""Drivers that turn a :class:`~demon_ep.dataio.RunConfig` into results.

The conditional dynamics of both protocol directions are independent of the
bath temperatures, so a sweep factors into "build the kernel once" plus a
cheap thermal re-weighting per bias point; the same split lets the analysis
path feed measured conditionals through the identical weighting code.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channels import ErrorModel, two_atom_probability
from .dataio import ConditionalTable, RunConfig, parse_table
from .entropy import (
    EpResult,
    cavity_heat,
    evaluate,
    feedback_balance_residual,
    high_bias_asymptote,
    jarzynski_average,
    mean_information,
    sigma1,
    sigma2,
    sigma6,
)
from .protocol import (
    TrajectoryTable,
    backward_conditionals,
    backward_table,
    branch_probability,
    forward_conditionals,
    forward_table,
    oracle_full_state,
    sigma_grid,
    sigma_histogram,
    tables_from_conditionals,
)
from .statespace import DEFAULT_DIMS, GibbsSpec, SystemDims

__all__ = [
    "ProtocolKernel",
    "build_kernel",
    "point_tables",
    "run_analysis",
    "run_sweep",
    "simulate_report",
]


@dataclass(frozen=True, eq=False)
class ProtocolKernel:
    """Bias-independent dynamics of one run: both conditional arrays."""

    mode: str
    dims: SystemDims
    forward_cond: np.ndarray
    backward_cond: np.ndarray
    backward_reset: np.ndarray


def build_kernel(config: RunConfig, dims: SystemDims = DEFAULT_DIMS) -> ProtocolKernel:
    model = None if config.mode == "ideal" else config.build_error_model()
    fcond = forward_conditionals(model, dims, config.mode)
    back_model = (
        ErrorModel.ideal()
        if (config.idealized_backward and config.mode == "physical")
        else model
    )
    bcond, reset = backward_conditionals(back_model, dims, config.mode)
    return ProtocolKernel(config.mode, dims, fcond, bcond, reset)


def point_tables(
    kernel: ProtocolKernel, gibbs: GibbsSpec
) -> tuple[TrajectoryTable, TrajectoryTable]:
    """Thermally weighted forward/backward tables at one bias point."""
    fwd = forward_table(
        gibbs, dims=kernel.dims, mode=kernel.mode, conditionals=kernel.forward_cond
    )
    bwd = backward_table(
        gibbs,
        dims=kernel.dims,
        mode=kernel.mode,
        forward_pk=branch_probability(fwd),
        conditionals=kernel.backward_cond,
        reset=kernel.backward_reset,
    )
    return fwd, bwd


def _sweep_point(payload) -> EpResult:
    kernel, beta_cavity, dbeta, sigma_tol, floor, heat_from_atom = payload
    gibbs = GibbsSpec.from_dbeta(beta_cavity, dbeta)
    fwd, bwd = point_tables(kernel, gibbs)
    hist = sigma_histogram(fwd, bwd, tol=sigma_tol)
    return evaluate(fwd, bwd, hist, floor=floor, heat_from_atom=heat_from_atom)


def run_sweep(config: RunConfig, dims: SystemDims = DEFAULT_DIMS) -> list[EpResult]:
    """All six estimators on the configured bias grid, in grid order."""
    kernel = build_kernel(config, dims)
    payloads = [
        (kernel, config.beta_cavity, float(dbeta), config.sigma_tol, config.floor,
         config.heat_from_atom)
        for dbeta in config.grid()
    ]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            return list(pool.map(_sweep_point, payloads))
    return [_sweep_point(p) for p in payloads]


def run_analysis(
    config: RunConfig,
    forward: ConditionalTable | str,
    backward: ConditionalTable | str | None = None,
    dims: SystemDims = DEFAULT_DIMS,
) -> list[EpResult]:
    """Estimators over the bias grid from measured conditional tables.

    Accepts parsed tables or paths.  Without a backward table only the
    forward-protocol estimators are meaningful; the remaining fields are NaN
    (and the CSV writer's forward-only layout omits them).
    """
    fwd_cond = (
        forward
        if isinstance(forward, ConditionalTable)
        else parse_table(forward, "forward-rows-initial")
    )
    bwd_cond = None
    if backward is not None:
        bwd_cond = (
            backward
            if isinstance(backward, ConditionalTable)
            else parse_table(backward, "backward-rows-final")
        )
    results = []
    for dbeta in config.grid():
        gibbs = GibbsSpec.from_dbeta(config.beta_cavity, float(dbeta))
        fwd, bwd = tables_from_conditionals(fwd_cond, bwd_cond, gibbs, dims, config.mode)
        if bwd is None:
            results.append(
                EpResult(
                    dbeta_tilde=gibbs.dbeta_tilde,
                    sigma1=sigma1(fwd, from_atom=config.heat_from_atom),
                    sigma2=sigma2(fwd, config.floor),
                    sigma3=math.nan,
                    sigma4=math.nan,
                    sigma5=math.nan,
                    sigma6=sigma6(fwd, config.floor),
                    heat_cavity=cavity_heat(fwd, from_atom=config.heat_from_atom),
                    mean_info=mean_information(fwd),
                )
            )
            continue
        hist = sigma_histogram(fwd, bwd, tol=config.sigma_tol)
        results.append(
            evaluate(fwd, bwd, hist, floor=config.floor,
                     heat_from_atom=config.heat_from_atom)
        )
    return results


def simulate_report(
    config: RunConfig, dbeta: float, dims: SystemDims = DEFAULT_DIMS
) -> str:
    """Full diagnostic text for a single bias point."""
    kernel = build_kernel(config, dims)
    gibbs = GibbsSpec.from_dbeta(config.beta_cavity, dbeta)
    fwd, bwd = point_tables(kernel, gibbs)
    pk = branch_probability(fwd)
    sig = sigma_grid(gibbs, pk, dims)
    hist = sigma_histogram(fwd, bwd, tol=config.sigma_tol)
    result = evaluate(fwd, bwd, hist, floor=config.floor,
                      heat_from_atom=config.heat_from_atom)
    model = None if config.mode == "ideal" else config.build_error_model()
    pre = oracle_full_state(gibbs, model, dims, config.mode, stage="pre_feedback")
    post = oracle_full_state(gibbs, model, dims, config.mode, stage="post_feedback")
    residual = feedback_balance_residual(pre, post, gibbs)
    nbar = model.nbar_atoms if model is not None else ErrorModel().nbar_atoms
    eff = model.detect_eff if model is not None else ErrorModel().detect_eff

    def fmt(x: float) -> str:
        return format(x, ".12g")

    lines = [
        f"mode {config.mode}   dbeta_tilde {fmt(dbeta)}",
        f"beta_cavity*omega {fmt(gibbs.beta_cavity)}   beta_qubit*omega {fmt(gibbs.beta_qubit)}",
        f"p(k) = [{fmt(pk[0])}, {fmt(pk[1])}]   mean information {fmt(result.mean_info)} nat",
        "",
        "forward trajectories (n_Q,k,n_C,m_Q,m_C): probability, sigma",
    ]
    for idx in np.argwhere(fwd.probs > 0.0):
        n_q, k, n_c, m_q, m_c = map(int, idx)
        lines.append(
            f"  ({n_q},{k},{n_c},{m_q},{m_c})  p={fmt(fwd.probs[tuple(idx)])}"
            f"  sigma={fmt(sig[tuple(idx)])}"
        )
    lines += [
        "",
        "backward trajectories (same labels): weight",
    ]
    for idx in np.argwhere(bwd.probs > 0.0):
        n_q, k, n_c, m_q, m_c = map(int, idx)
        lines.append(f"  ({n_q},{k},{n_c},{m_q},{m_c})  p~={fmt(bwd.probs[tuple(idx)])}")
    lines += [
        f"backward prior mass {fmt(bwd.prior_mass)}   unlabeled {fmt(bwd.unlabeled_mass)}",
    ]
    if bwd.demon_reset_prob is not None:
        lines.append(f"memory reset probability {fmt(bwd.demon_reset_prob)}")
    lines += [
        "",
        "sigma histogram: sigma, p_fwd, p_bwd",
    ]
    for s, p_f, p_b in zip(hist.sigma, hist.p_forward, hist.p_backward):
        lines.append(f"  {fmt(s)}  {fmt(p_f)}  {fmt(p_b)}")
    lines += [
        "",
        f"sigma1 {fmt(result.sigma1)}",
        f"sigma2 {fmt(result.sigma2)}",
        f"sigma3 {fmt(result.sigma3)}",
        f"sigma4 {fmt(result.sigma4)}",
        f"sigma5 {fmt(result.sigma5)}",
        f"sigma6 {fmt(result.sigma6)}",
        f"cavity heat {fmt(result.heat_cavity)} (units of omega)",
        f"high-bias asymptote {fmt(high_bias_asymptote(gibbs))}",
        f"feedback balance residual {fmt(residual)}",
        f"fluctuation average (reversed ensemble) {fmt(jarzynski_average(hist, 'reversed'))}",
        f"fluctuation average (forward ensemble)  {fmt(jarzynski_average(hist, 'forward'))}",
        f"two-atom event probability {fmt(two_atom_probability(nbar, eff))} (diagnostic)",
    ]
    if result.flags:
        lines.append("flags: " + "; ".join(result.flags))
    return "\n".join(lines) + "\n"
