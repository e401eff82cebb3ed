"""State spaces, thermal distributions, and classical information measures.

Everything downstream works with diagonal (classical) states over a small
tensor product: a two-level qubit Q, a two-level memory D, and a cavity mode C
truncated to a few Fock states.  Distributions are plain 1-D ``numpy`` arrays;
the joint state carries its axis layout in :class:`JointDistribution`.

Energies are measured in units of the shared quantum ``omega`` (the qubit
transition and the cavity spacing are resonant), so inverse temperatures enter
only through the dimensionless combination ``beta * omega``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AXES",
    "Distribution",
    "EnergyLevels",
    "GibbsSpec",
    "JointDistribution",
    "SystemDims",
    "condition",
    "extended_gibbs",
    "gibbs_distribution",
    "marginalize",
    "mean_occupation",
    "mutual_information",
    "relative_entropy",
    "shannon_entropy",
]

#: Axis order of every joint array: qubit, memory (demon), cavity.
AXES = ("qubit", "demon", "cavity")

#: Classical distributions are bare 1-D float arrays.
Distribution = np.ndarray

_NORM_TOL = 1e-12


@dataclass(frozen=True)
class SystemDims:
    """Level counts for the three subsystems.

    ``dim_cavity_init`` is the truncation used for the initial thermal state
    (the feedback step can add one photon, so the evolved cavity lives on the
    larger ``dim_cavity_full`` space).
    """

    dim_qubit: int = 2
    dim_demon: int = 2
    dim_cavity_init: int = 4
    dim_cavity_full: int = 5

    def __post_init__(self) -> None:
        if self.dim_qubit != 2 or self.dim_demon != 2:
            raise ValueError("qubit and memory must be two-level systems")
        if self.dim_cavity_init < 2:
            raise ValueError("cavity needs at least two levels")
        if self.dim_cavity_full < self.dim_cavity_init + 1:
            raise ValueError(
                "evolved cavity space must exceed the initial truncation by "
                "at least one level (feedback can add a photon)"
            )

    @property
    def joint_shape(self) -> tuple[int, int, int]:
        return (self.dim_qubit, self.dim_demon, self.dim_cavity_full)


DEFAULT_DIMS = SystemDims()


@dataclass(frozen=True)
class EnergyLevels:
    """Harmonic level ladder e(n) = n * omega, shared by qubit and cavity."""

    omega: float = 1.0

    def __post_init__(self) -> None:
        if not self.omega > 0:
            raise ValueError("omega must be positive")

    def energy(self, n) -> np.ndarray | float:
        return np.asarray(n, dtype=float) * self.omega


@dataclass(frozen=True)
class GibbsSpec:
    """Inverse temperatures of qubit and cavity baths, in units of 1/omega.

    The sweep parameter ``dbeta_tilde`` fixes the qubit temperature relative
    to the cavity one via ``beta_qubit = beta_cavity * (1 - dbeta_tilde)``;
    negative ``beta_qubit`` (population inversion) is allowed, the cavity bath
    must be at a genuine positive temperature.
    """

    beta_qubit: float
    beta_cavity: float
    dbeta_tilde: float = field(default=float("nan"))

    def __post_init__(self) -> None:
        if not self.beta_cavity > 0:
            raise ValueError("cavity inverse temperature must be positive")
        if math.isnan(self.dbeta_tilde):
            object.__setattr__(
                self, "dbeta_tilde", 1.0 - self.beta_qubit / self.beta_cavity
            )
        else:
            expected = self.beta_cavity * (1.0 - self.dbeta_tilde)
            if abs(expected - self.beta_qubit) > 1e-9 * max(1.0, abs(expected)):
                raise ValueError(
                    "inconsistent (beta_qubit, beta_cavity, dbeta_tilde) triple"
                )

    @classmethod
    def from_dbeta(cls, beta_cavity: float, dbeta_tilde: float) -> "GibbsSpec":
        return cls(
            beta_qubit=beta_cavity * (1.0 - dbeta_tilde),
            beta_cavity=beta_cavity,
            dbeta_tilde=dbeta_tilde,
        )

    @property
    def delta_beta(self) -> float:
        """beta_cavity - beta_qubit = beta_cavity * dbeta_tilde."""
        return self.beta_cavity - self.beta_qubit


def gibbs_distribution(
    beta_omega: float,
    levels: int,
    truncate_renormalize: bool = True,
) -> Distribution:
    """Thermal occupation of a harmonic ladder with ``levels`` states.

    Parameters
    ----------
    beta_omega:
        Dimensionless inverse temperature ``beta * omega``.  May be negative
        (inverted populations) when ``truncate_renormalize`` is true.
    levels:
        Number of ladder states kept, energies 0, 1, ..., levels-1 (in units
        of omega).
    truncate_renormalize:
        If true (default), normalize over the kept levels.  If false, divide
        by the *untruncated* partition function ``1/(1 - e^-beta_omega)``
        instead, yielding the exact Boltzmann weights of the infinite ladder
        restricted to the kept levels (sums to less than one); this requires
        ``beta_omega > 0``.
    """
    if levels < 1:
        raise ValueError("need at least one level")
    n = np.arange(levels, dtype=float)
    weights = np.exp(-beta_omega * n)
    if truncate_renormalize:
        return weights / weights.sum()
    if not beta_omega > 0:
        raise ValueError("untruncated normalization needs beta_omega > 0")
    return weights * (1.0 - math.exp(-beta_omega))


def extended_gibbs(beta_omega: float, levels_norm: int, levels_total: int) -> np.ndarray:
    """Thermal weights normalized on the first ``levels_norm`` levels, then
    extended to ``levels_total`` levels by the exact Boltzmann factors.

    The result sums to slightly more than one: the extra levels carry the
    genuine Boltzmann weight ``e^(-beta_omega * n) / Z_norm``.  This is the
    single-free-energy convention used for the backward-protocol priors and
    the thermal reference of the divergence-based estimators, so that forward
    and backward weights share one normalization constant per subsystem.
    """
    if levels_total < levels_norm:
        raise ValueError("levels_total must be >= levels_norm")
    n = np.arange(levels_total, dtype=float)
    weights = np.exp(-beta_omega * n)
    z_norm = weights[:levels_norm].sum()
    return weights / z_norm


def mean_occupation(dist: Distribution) -> float:
    """Average level index <n> of a ladder distribution."""
    p = np.asarray(dist, dtype=float)
    return float(np.dot(np.arange(p.size), p))


def shannon_entropy(dist) -> float:
    """Shannon entropy -sum p ln p in nats, with 0 ln 0 = 0.

    Accepts arrays of any shape (flattened); tolerates unnormalized input so
    it can also evaluate sub-normalized reference measures.
    """
    p = np.asarray(dist, dtype=float).ravel()
    nz = p[p > 0.0]
    return float(-np.dot(nz, np.log(nz)))


def relative_entropy(p, q) -> float:
    """Kullback-Leibler divergence sum p ln(p/q) in nats.

    Returns ``inf`` when ``p`` has support where ``q`` vanishes.  ``q`` may be
    an unnormalized reference measure; ``p`` should be a distribution for the
    usual non-negativity guarantee.
    """
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.shape != q.shape:
        raise ValueError("p and q must have the same shape")
    mask = p > 0.0
    if np.any(q[mask] <= 0.0):
        return math.inf
    pm = p[mask]
    return float(np.dot(pm, np.log(pm / q[mask])))


@dataclass(frozen=True)
class JointDistribution:
    """Joint diagonal state over (qubit, demon, cavity).

    ``probs`` has shape ``dims.joint_shape`` and must sum to one to 1e-12;
    construction fails loudly otherwise, so that bookkeeping errors in the
    protocol code cannot silently leak probability.
    """

    dims: SystemDims
    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", p)
        if p.shape != self.dims.joint_shape:
            raise ValueError(
                f"probs shape {p.shape} does not match dims {self.dims.joint_shape}"
            )
        if np.any(p < -_NORM_TOL):
            raise ValueError("negative probability in joint distribution")
        total = float(p.sum())
        if abs(total - 1.0) > _NORM_TOL:
            raise ValueError(f"joint distribution sums to {total!r}, not 1")

    def axis(self, name: str) -> int:
        try:
            return AXES.index(name)
        except ValueError:
            raise KeyError(f"unknown axis {name!r}; expected one of {AXES}") from None


def _axis_indices(joint: JointDistribution, names) -> tuple[int, ...]:
    if isinstance(names, str):
        names = (names,)
    return tuple(joint.axis(n) for n in names)


def marginalize(joint: JointDistribution, keep) -> np.ndarray:
    """Marginal distribution over the named axes (order as given in ``keep``)."""
    keep_idx = _axis_indices(joint, keep)
    if len(set(keep_idx)) != len(keep_idx):
        raise ValueError("duplicate axis in keep")
    drop = tuple(i for i in range(3) if i not in keep_idx)
    out = joint.probs.sum(axis=drop) if drop else joint.probs
    # sum() preserves remaining axes in original order; permute to match keep.
    remaining = [i for i in range(3) if i in keep_idx]
    perm = [remaining.index(i) for i in keep_idx]
    return np.transpose(out, perm) if out.ndim > 1 else out


def condition(joint: JointDistribution, on: dict) -> tuple[np.ndarray, float]:
    """Condition on exact values of one or more axes.

    Parameters
    ----------
    on:
        Mapping from axis name ("qubit", "demon", "cavity") to the observed
        level index.

    Returns
    -------
    (dist, prob):
        ``dist`` is the conditional distribution over the remaining axes (in
        canonical axis order) and ``prob`` the probability of the conditioning
        event.  A zero-probability event yields an all-zero ``dist``.
    """
    idx: list = [slice(None)] * 3
    for name, value in on.items():
        ax = joint.axis(name)
        if not 0 <= int(value) < joint.dims.joint_shape[ax]:
            raise ValueError(f"axis {name!r} has no level {value!r}")
        idx[ax] = int(value)
    slab = joint.probs[tuple(idx)]
    prob = float(slab.sum())
    if prob <= 0.0:
        return np.zeros_like(slab), 0.0
    return slab / prob, prob


def mutual_information(joint: JointDistribution, cut) -> float:
    """Mutual information I(A:B) across a bipartition of the three axes.

    ``cut`` names the axes on side A (e.g. ``("qubit", "cavity")``); side B is
    the complement.  Both sides must be non-empty.
    """
    a_idx = _axis_indices(joint, cut)
    b_idx = tuple(i for i in range(3) if i not in a_idx)
    if not a_idx or not b_idx:
        raise ValueError("cut must split the axes into two non-empty groups")
    p = joint.probs
    pa = p.sum(axis=b_idx)
    pb = p.sum(axis=a_idx)
    return shannon_entropy(pa) + shannon_entropy(pb) - shannon_entropy(p)
