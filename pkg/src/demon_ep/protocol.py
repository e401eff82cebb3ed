"""Forward and backward demon protocols as exact trajectory statistics.

A trajectory is the label tuple gamma = (n_Q, k, n_C, m_Q, m_C): initial
qubit and cavity levels, memory readout outcome k, final qubit and cavity
levels.  The forward protocol draws (n_Q, n_C) thermally, writes the qubit
state into the memory (k), runs the conditional photon exchange, and measures
the final levels.  The backward protocol prepares the *final* configuration
of a branch — atom encoding (m_Q, k), cavity in Fock state m_C drawn from the
thermal weights — and runs the time-reversed gate sequence.

Tables are dense arrays ``probs[n_Q, k, n_C, m_Q, m_C]``.  Forward tables are
normalized.  Backward tables are weighted by the single-free-energy thermal
convention: cavity weights are normalized on the *initial* truncation and
extended to the evolved space by exact Boltzmann factors, so the total
backward mass exceeds one by the weight of the extension level.  Backward
outcomes whose final photon number falls outside the initial truncation carry
no trajectory label and are accumulated in ``unlabeled_mass``; the sum of
labeled and unlabeled mass always equals the prior mass put in.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .channels import (
    AtomLevel,
    ErrorModel,
    apply,
    compose,
    detection_channel,
    encode_atom,
    feedback_channel,
    prepare_atom,
    prepare_cavity,
    readout_channel,
    relaxation_channel,
)
from .statespace import (
    DEFAULT_DIMS,
    GibbsSpec,
    JointDistribution,
    SystemDims,
    extended_gibbs,
    gibbs_distribution,
)

if TYPE_CHECKING:  # pragma: no cover
    from .dataio import ConditionalTable

__all__ = [
    "SigmaHistogram",
    "Trajectory",
    "TrajectoryTable",
    "backward_table",
    "branch_probability",
    "final_state_marginal",
    "forward_table",
    "oracle_full_state",
    "sigma_grid",
    "sigma_histogram",
    "sigma_of_trajectory",
    "tables_from_conditionals",
]

MODES = ("ideal", "physical")
STAGES = ("initial", "pre_feedback", "post_feedback", "final")

_HARD_TOL = 1e-3
_SOFT_TOL = 1e-9


@dataclass(frozen=True)
class Trajectory:
    """Two-point-measurement label (n_Q, k, n_C, m_Q, m_C)."""

    n_qubit: int
    k: int
    n_cavity: int
    m_qubit: int
    m_cavity: int

    def __post_init__(self) -> None:
        for name in ("n_qubit", "k", "m_qubit"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1")
        if self.n_cavity < 0 or self.m_cavity < 0:
            raise ValueError("photon numbers must be non-negative")

    @property
    def index(self) -> tuple[int, int, int, int, int]:
        return (self.n_qubit, self.k, self.n_cavity, self.m_qubit, self.m_cavity)


def _check_mass(total: float, expected: float, what: str) -> None:
    err = abs(total - expected)
    if err > _HARD_TOL:
        raise ValueError(f"{what}: mass {total!r} differs from {expected!r}")
    if err > _SOFT_TOL:
        warnings.warn(
            f"{what}: mass off by {err:.2e} (tolerated, likely measured input)",
            stacklevel=3,
        )


@dataclass(frozen=True, eq=False)
class TrajectoryTable:
    """Joint trajectory probabilities for one direction of the protocol.

    ``probs[n_Q, k, n_C, m_Q, m_C]`` with n_C on the initial truncation and
    m_C on the evolved space.  Forward tables sum to one.  Backward tables
    carry ``prior_mass`` (total weight fed in, > 1 under the extended thermal
    convention) and ``unlabeled_mass`` (outcomes without a trajectory label);
    labeled + unlabeled = prior mass is enforced.  Sub-permille deviations are
    tolerated with a warning so measured tables remain loadable.
    """

    probs: np.ndarray
    direction: str
    gibbs: GibbsSpec
    dims: SystemDims = DEFAULT_DIMS
    provenance: str = "simulated"
    prior_mass: float = 1.0
    unlabeled_mass: float = 0.0
    demon_reset_prob: float | None = None
    #: conditional-evolution array the table was weighted from, kept so
    #: serialization can emit exactly what the dynamics produced
    conditionals: np.ndarray | None = None

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", p)
        expected = (
            2,
            2,
            self.dims.dim_cavity_init,
            2,
            self.dims.dim_cavity_full,
        )
        if p.shape != expected:
            raise ValueError(f"probs shape {p.shape}, expected {expected}")
        if self.direction not in ("forward", "backward"):
            raise ValueError(f"direction must be forward/backward, got {self.direction!r}")
        if np.any(p < -1e-15):
            raise ValueError("negative trajectory probability")
        if self.direction == "forward":
            _check_mass(float(p.sum()), 1.0, "forward table")
        else:
            _check_mass(
                float(p.sum()) + self.unlabeled_mass,
                self.prior_mass,
                "backward table conservation",
            )


def branch_probability(table: TrajectoryTable) -> np.ndarray:
    """Readout outcome distribution p(k) of a forward table."""
    if table.direction != "forward":
        raise ValueError("branch probabilities are defined by the forward protocol")
    return table.probs.sum(axis=(0, 2, 3, 4))


def sigma_of_trajectory(traj: Trajectory, gibbs: GibbsSpec, pk: np.ndarray) -> float:
    """Stochastic entropy production of one trajectory, in nats.

    Heat exchanged with each bath is read off the two-point energies, and the
    readout outcome contributes its surprisal: sigma = beta_Q (e_mQ - e_nQ) +
    beta_C (e_mC - e_nC) - ln p(k), with energies in units of omega.
    """
    pk_val = float(pk[traj.k])
    if pk_val <= 0.0:
        return math.inf
    return (
        gibbs.beta_qubit * (traj.m_qubit - traj.n_qubit)
        + gibbs.beta_cavity * (traj.m_cavity - traj.n_cavity)
        - math.log(pk_val)
    )


def sigma_grid(gibbs: GibbsSpec, pk: np.ndarray, dims: SystemDims = DEFAULT_DIMS) -> np.ndarray:
    """sigma over the full label grid, shaped like TrajectoryTable.probs."""
    n_q = np.arange(2)
    k = np.arange(2)
    n_c = np.arange(dims.dim_cavity_init)
    m_q = np.arange(2)
    m_c = np.arange(dims.dim_cavity_full)
    with np.errstate(divide="ignore"):
        log_pk = np.log(np.asarray(pk, dtype=float))
    out = (
        gibbs.beta_qubit * (m_q[None, None, None, :, None] - n_q[:, None, None, None, None])
        + gibbs.beta_cavity * (m_c[None, None, None, None, :] - n_c[None, None, :, None, None])
        - log_pk[None, :, None, None, None]
    )
    return np.broadcast_to(out, (2, 2, dims.dim_cavity_init, 2, dims.dim_cavity_full)).copy()


# ---------------------------------------------------------------------------
# Conditional evolution


def _resolve_model(model: ErrorModel | None, mode: str) -> ErrorModel:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "ideal":
        if model is not None and not model.is_ideal:
            raise ValueError("ideal mode does not accept an error model")
        return ErrorModel.ideal()
    return model if model is not None else ErrorModel()


def _physical_chain(model: ErrorModel, dims: SystemDims, backward: bool):
    pulse = readout_channel(model.eps_read, dims, mode="physical")
    swap = feedback_channel(model.eps_feed, dims, mode="physical")
    tail = compose(
        detection_channel(model.confusion, dims), relaxation_channel(model, dims)
    )
    core = compose(pulse, swap) if backward else compose(swap, pulse)
    return compose(tail, core)


def forward_conditionals(
    model: ErrorModel | None = None,
    dims: SystemDims = DEFAULT_DIMS,
    mode: str = "ideal",
) -> np.ndarray:
    """p(m_Q, k, m_C | n_Q, n_C): outcome statistics per initial label.

    Shape (2, 2, dim_cavity_full, 2, dim_cavity_init); summing the first
    three axes gives one for every initial label.
    """
    model = _resolve_model(model, mode)
    full, init = dims.dim_cavity_full, dims.dim_cavity_init
    out = np.zeros((2, 2, full, 2, init))
    if mode == "ideal":
        chain = compose(
            feedback_channel(0.0, dims, mode="abstract"),
            readout_channel(0.0, dims, mode="abstract"),
        )
        for n_q in range(2):
            for n_c in range(init):
                start = np.zeros((2, 2, full))
                start[n_q, 1, n_c] = 1.0  # memory initialized to 1
                final = apply(chain, start.ravel()).reshape(2, 2, full)
                out[:, :, :, n_q, n_c] = np.transpose(final, (0, 1, 2))
        return out
    chain = _physical_chain(model, dims, backward=False)
    for n_q in range(2):
        atom = prepare_atom(encode_atom(n_q, 1), model.eps_prep)
        for n_c in range(init):
            cav = prepare_cavity(n_c, model, dims)
            final = apply(chain, np.kron(atom, cav)).reshape(3, full)
            for level in AtomLevel:
                out[level.n_qubit, level.n_demon, :, n_q, n_c] += final[level]
    return out


def backward_conditionals(
    model: ErrorModel | None = None,
    dims: SystemDims = DEFAULT_DIMS,
    mode: str = "ideal",
) -> tuple[np.ndarray, np.ndarray]:
    """Backward-run statistics p(n_Q, n_C | m_Q, k, m_C) plus reset diagnostic.

    Returns ``(bcond, reset)``.  ``bcond`` has shape
    (2, dim_cavity_full, 2, 2, dim_cavity_full): final label (n_Q, n_C) —
    with n_C on the *evolved* space, since the reversed run can overflow the
    initial truncation — given the prepared branch configuration
    (m_Q, k, m_C).  The final memory register is traced out of ``bcond``;
    ``reset[m_Q, k, m_C]`` is the probability that it returned to its
    reference value 1 (a reversal-quality diagnostic, never a filter).
    In physical mode the unencodable column (m_Q=1, k=0) is identically zero.
    """
    model = _resolve_model(model, mode)
    full = dims.dim_cavity_full
    bcond = np.zeros((2, full, 2, 2, full))
    reset = np.zeros((2, 2, full))
    if mode == "ideal":
        chain = compose(
            readout_channel(0.0, dims, mode="abstract"),
            feedback_channel(0.0, dims, mode="abstract"),
        )
        for m_q in range(2):
            for k in range(2):
                for m_c in range(full):
                    start = np.zeros((2, 2, full))
                    start[m_q, k, m_c] = 1.0
                    final = apply(chain, start.ravel()).reshape(2, 2, full)
                    bcond[:, :, m_q, k, m_c] = final.sum(axis=1)
                    reset[m_q, k, m_c] = final[:, 1, :].sum()
        return bcond, reset
    chain = _physical_chain(model, dims, backward=True)
    for m_q in range(2):
        for k in range(2):
            if (m_q, k) == (1, 0):
                continue  # no atomic level encodes this pair
            atom = prepare_atom(encode_atom(m_q, k), model.eps_prep)
            for m_c in range(full):
                cav = prepare_cavity(m_c, model, dims)
                final = apply(chain, np.kron(atom, cav)).reshape(3, full)
                for level in AtomLevel:
                    bcond[level.n_qubit, :, m_q, k, m_c] += final[level]
                    if level.n_demon == 1:
                        reset[m_q, k, m_c] += final[level].sum()
    return bcond, reset


# ---------------------------------------------------------------------------
# Thermal weighting


def _forward_priors(gibbs: GibbsSpec, dims: SystemDims) -> tuple[np.ndarray, np.ndarray]:
    p_qubit = gibbs_distribution(gibbs.beta_qubit, 2)
    p_cavity = gibbs_distribution(gibbs.beta_cavity, dims.dim_cavity_init)
    return p_qubit, p_cavity


def _weight_forward(
    cond: np.ndarray, gibbs: GibbsSpec, dims: SystemDims, provenance: str
) -> TrajectoryTable:
    p_qubit, p_cavity = _forward_priors(gibbs, dims)
    probs = np.einsum("mkfnc,n,c->nkcmf", cond, p_qubit, p_cavity)
    return TrajectoryTable(probs, "forward", gibbs, dims, provenance, conditionals=cond)


def _weight_backward(
    bcond: np.ndarray,
    gibbs: GibbsSpec,
    pk: np.ndarray,
    dims: SystemDims,
    mode: str,
    provenance: str,
    reset: np.ndarray | None = None,
) -> TrajectoryTable:
    zeta_q = gibbs_distribution(gibbs.beta_qubit, 2)
    w_cav = extended_gibbs(gibbs.beta_cavity, dims.dim_cavity_init, dims.dim_cavity_full)
    prior_qk = np.outer(zeta_q, np.asarray(pk, dtype=float))  # [m_Q, k]
    if mode == "physical":
        if prior_qk[1, 0] > 0.0:
            warnings.warn(
                "backward branch k=0 cannot be prepared with the qubit excited "
                "(no atomic encoding); its thermal weight is reassigned to the "
                "ground state",
                stacklevel=3,
            )
        prior_qk[0, 0] += prior_qk[1, 0]
        prior_qk[1, 0] = 0.0
    weights = prior_qk[:, :, None] * w_cav[None, None, :]  # [m_Q, k, m_C]
    joint = bcond * weights[None, None, :, :, :]  # [n_Q, n_C, m_Q, k, m_C]
    init = dims.dim_cavity_init
    labeled = np.transpose(joint[:, :init], (0, 3, 1, 2, 4))
    unlabeled = float(joint[:, init:].sum())
    reset_prob = None
    if reset is not None:
        total = float(weights.sum())
        reset_prob = float((reset * weights).sum() / total) if total > 0 else None
    return TrajectoryTable(
        labeled,
        "backward",
        gibbs,
        dims,
        provenance,
        prior_mass=float(weights.sum()),
        unlabeled_mass=unlabeled,
        demon_reset_prob=reset_prob,
        conditionals=bcond,
    )


# ---------------------------------------------------------------------------
# Public table builders


def forward_table(
    gibbs: GibbsSpec,
    model: ErrorModel | None = None,
    dims: SystemDims = DEFAULT_DIMS,
    mode: str = "ideal",
    conditionals: np.ndarray | None = None,
) -> TrajectoryTable:
    """Exact forward trajectory statistics p(gamma).

    ``conditionals`` injects a precomputed (or measured) conditional array;
    the dynamics are bias-independent, so a sweep can reuse one such array
    across all grid points.
    """
    cond = conditionals if conditionals is not None else forward_conditionals(model, dims, mode)
    return _weight_forward(cond, gibbs, dims, provenance=f"simulated:{mode}")


def backward_table(
    gibbs: GibbsSpec,
    model: ErrorModel | None = None,
    dims: SystemDims = DEFAULT_DIMS,
    mode: str = "ideal",
    forward_pk: np.ndarray | None = None,
    idealized_backward: bool = False,
    conditionals: np.ndarray | None = None,
    reset: np.ndarray | None = None,
) -> TrajectoryTable:
    """Exact backward trajectory statistics p(gamma-tilde).

    ``forward_pk`` is the forward readout distribution used to weight the
    branches; by default it is computed from the matching forward table.
    ``idealized_backward`` runs the reversed gates error-free while keeping
    the physical encoding constraints (useful to isolate forward errors).
    ``conditionals`` injects a precomputed backward conditional array, in
    which case ``forward_pk`` must be given too.
    """
    if conditionals is not None:
        if forward_pk is None:
            raise ValueError("forward_pk is required with precomputed conditionals")
        bcond = conditionals
    else:
        if forward_pk is None:
            forward_pk = branch_probability(forward_table(gibbs, model, dims, mode))
        back_model = (
            ErrorModel.ideal() if (idealized_backward and mode == "physical") else model
        )
        bcond, reset = backward_conditionals(back_model, dims, mode)
    suffix = ":idealized" if idealized_backward and mode == "physical" else ""
    return _weight_backward(
        bcond, gibbs, forward_pk, dims, mode,
        provenance=f"simulated:{mode}{suffix}", reset=reset,
    )


def tables_from_conditionals(
    fwd_cond: "ConditionalTable",
    bwd_cond: "ConditionalTable | None",
    gibbs: GibbsSpec,
    dims: SystemDims = DEFAULT_DIMS,
    mode: str = "physical",
) -> tuple[TrajectoryTable, TrajectoryTable | None]:
    """Rebuild trajectory tables from measured conditional-probability tables.

    The forward table supplies the thermal priors and the branch distribution
    p(k); the backward table is weighted with the same extended thermal
    convention as a direct simulation, so analyzing serialized conditionals
    reproduces the simulated tables exactly.  ``mode`` selects the encoding
    convention ("physical" tables have no (m_Q=1, k=0) columns).  With no
    backward table only the forward reconstruction is returned.
    """
    full, init = dims.dim_cavity_full, dims.dim_cavity_init
    if fwd_cond.orientation != "forward-rows-initial":
        raise ValueError("forward conditionals must be row-oriented on initial labels")
    if bwd_cond is not None and bwd_cond.orientation != "backward-rows-final":
        raise ValueError("backward conditionals must be row-oriented on final labels")
    cond = np.zeros((2, 2, full, 2, init))
    for i, (n_q, n_c) in enumerate(fwd_cond.row_labels):
        if not (0 <= n_q < 2 and 0 <= n_c < init):
            raise ValueError(f"forward row label ({n_q}, {n_c}) out of range")
        for j, (m_q, k, m_c) in enumerate(fwd_cond.col_labels):
            if not (0 <= m_q < 2 and 0 <= k < 2 and 0 <= m_c < full):
                raise ValueError(f"forward column label ({m_q}, {k}, {m_c}) out of range")
            cond[m_q, k, m_c, n_q, n_c] = fwd_cond.values[i, j]
    fwd = _weight_forward(cond, gibbs, dims, provenance="reconstructed")
    if bwd_cond is None:
        return fwd, None

    bcond = np.zeros((2, full, 2, 2, full))
    for i, (n_q, n_c) in enumerate(bwd_cond.row_labels):
        if not (0 <= n_q < 2 and 0 <= n_c < full):
            raise ValueError(f"backward row label ({n_q}, {n_c}) out of range")
        for j, (m_q, k, m_c) in enumerate(bwd_cond.col_labels):
            if not (0 <= m_q < 2 and 0 <= k < 2 and 0 <= m_c < full):
                raise ValueError(f"backward column label ({m_q}, {k}, {m_c}) out of range")
            bcond[n_q, n_c, m_q, k, m_c] = bwd_cond.values[i, j]
    pk = branch_probability(fwd)
    bwd = _weight_backward(bcond, gibbs, pk, dims, mode, provenance="reconstructed")
    return fwd, bwd


# ---------------------------------------------------------------------------
# Full-state oracle


def oracle_full_state(
    gibbs: GibbsSpec,
    model: ErrorModel | None = None,
    dims: SystemDims = DEFAULT_DIMS,
    mode: str = "ideal",
    stage: str = "final",
) -> JointDistribution:
    """Average joint (qubit, memory, cavity) state of the forward protocol.

    Evolves the thermal initial mixture as one distribution instead of
    trajectory-by-trajectory; marginals of the trajectory table must agree
    with it, which cross-checks the bookkeeping.  ``stage`` taps the state
    before the readout ("initial"), between readout and feedback
    ("pre_feedback"), after feedback ("post_feedback") or after the detection
    stage ("final"; identical to post_feedback in ideal mode).
    """
    if stage not in STAGES:
        raise ValueError(f"stage must be one of {STAGES}, got {stage!r}")
    model = _resolve_model(model, mode)
    full = dims.dim_cavity_full
    p_qubit, p_cavity = _forward_priors(gibbs, dims)
    if mode == "ideal":
        state = np.zeros((2, 2, full))
        state[:, 1, : dims.dim_cavity_init] = np.outer(p_qubit, p_cavity)
        state = state.ravel()
        if stage in ("pre_feedback", "post_feedback", "final"):
            state = apply(readout_channel(0.0, dims, mode="abstract"), state)
        if stage in ("post_feedback", "final"):
            state = apply(feedback_channel(0.0, dims, mode="abstract"), state)
        return JointDistribution(dims, state.reshape(2, 2, full))
    atom = sum(
        p_qubit[n_q] * prepare_atom(encode_atom(n_q, 1), model.eps_prep)
        for n_q in range(2)
    )
    cavity = sum(
        p_cavity[n_c] * prepare_cavity(n_c, model, dims)
        for n_c in range(dims.dim_cavity_init)
    )
    state = np.kron(atom, cavity)
    if stage in ("pre_feedback", "post_feedback", "final"):
        state = apply(readout_channel(model.eps_read, dims, mode="physical"), state)
    if stage in ("post_feedback", "final"):
        state = apply(feedback_channel(model.eps_feed, dims, mode="physical"), state)
    if stage == "final":
        state = apply(relaxation_channel(model, dims), state)
        state = apply(detection_channel(model.confusion, dims), state)
    levels = state.reshape(3, full)
    joint = np.zeros((2, 2, full))
    for level in AtomLevel:
        joint[level.n_qubit, level.n_demon] += levels[level]
    return JointDistribution(dims, joint)


def final_state_marginal(table: TrajectoryTable) -> np.ndarray:
    """Final joint state implied by a forward table, as (m_Q, k, m_C) array.

    The memory axis carries the readout outcome, matching the layout of
    :func:`oracle_full_state` at stage "final".
    """
    if table.direction != "forward":
        raise ValueError("final-state marginal is defined for forward tables")
    return np.transpose(table.probs.sum(axis=(0, 2)), (1, 0, 2))


# ---------------------------------------------------------------------------
# Sigma histogram


@dataclass(frozen=True, eq=False)
class SigmaHistogram:
    """Forward/backward weight per stochastic-entropy value.

    Bins are sorted ascending and separated by more than ``tolerance``.
    ``p_forward`` sums to one; ``p_backward`` holds the backward weight of
    the *same* trajectories, so bins of forward-impossible labels never
    appear and backward weight of unpaired reversals is excluded.
    """

    sigma: np.ndarray
    p_forward: np.ndarray
    p_backward: np.ndarray
    tolerance: float = 1e-9

    def __post_init__(self) -> None:
        s = np.asarray(self.sigma, dtype=float)
        pf = np.asarray(self.p_forward, dtype=float)
        pb = np.asarray(self.p_backward, dtype=float)
        for name, arr in (("sigma", s), ("p_forward", pf), ("p_backward", pb)):
            object.__setattr__(self, name, arr)
        if not (s.shape == pf.shape == pb.shape) or s.ndim != 1:
            raise ValueError("sigma, p_forward, p_backward must be equal-length vectors")
        if s.size and np.any(np.diff(s) <= self.tolerance):
            raise ValueError("sigma bins must be strictly increasing beyond tolerance")
        if np.any(pf < 0) or np.any(pb < 0):
            raise ValueError("negative histogram weight")
        _check_mass(float(pf.sum()), 1.0, "sigma histogram forward weight")

    def mean_sigma(self) -> float:
        return float(np.dot(self.sigma, self.p_forward))


def sigma_histogram(
    fwd: TrajectoryTable,
    bwd: TrajectoryTable,
    tol: float = 1e-9,
) -> SigmaHistogram:
    """Bin trajectory weights by their stochastic entropy production.

    Trajectories are keyed by sigma; values closer than ``tol`` share a bin.
    Only forward-possible trajectories (p(gamma) > 0) contribute — a backward
    run ending in a label the forward protocol cannot produce is a failed
    reversal with no partner trajectory.
    """
    if fwd.direction != "forward" or bwd.direction != "backward":
        raise ValueError("need one forward and one backward table")
    if fwd.dims != bwd.dims:
        raise ValueError("tables built over different spaces")
    pk = branch_probability(fwd)
    sig = sigma_grid(fwd.gibbs, pk, fwd.dims)
    mask = fwd.probs > 0.0
    order = np.argsort(sig[mask], kind="stable")
    sigmas = sig[mask][order]
    p_f = fwd.probs[mask][order]
    p_b = bwd.probs[mask][order]
    bins: list[float] = []
    acc_f: list[float] = []
    acc_b: list[float] = []
    for s, f, b in zip(sigmas, p_f, p_b):
        if bins and s - bins[-1] <= tol:
            acc_f[-1] += f
            acc_b[-1] += b
        else:
            bins.append(float(s))
            acc_f.append(float(f))
            acc_b.append(float(b))
    return SigmaHistogram(
        np.array(bins), np.array(acc_f), np.array(acc_b), tolerance=tol
    )
