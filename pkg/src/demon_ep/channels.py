"""Classical stochastic channels for the demon circuit and its imperfections.

Two state-space conventions coexist:

* **abstract** — the logical basis (n_Q, n_D, n_C): qubit, memory, cavity.
  Used by the ideal protocol, where readout is a memory flip conditioned on
  the qubit and feedback is a controlled photon exchange.
* **physical** — the basis (level, n_C) with a three-level atom carrying both
  logical registers: level e encodes (n_Q=1, n_D=1), g encodes (0, 1) and
  f encodes (0, 0).  The fourth logical pair (1, 0) has no atomic level and
  can never be populated.  Used by the imperfection model, where the readout
  is a g<->f pi-pulse and errors act on atomic levels.

Channels are column-stochastic matrices ``m[to, from]`` tagged with their
basis labels, so composition across mismatched spaces fails loudly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .statespace import DEFAULT_DIMS, SystemDims

__all__ = [
    "AtomLevel",
    "ErrorModel",
    "StochasticChannel",
    "abstract_labels",
    "apply",
    "compose",
    "detection_channel",
    "encode_atom",
    "feedback_channel",
    "identity_channel",
    "physical_labels",
    "prepare_atom",
    "prepare_cavity",
    "readout_channel",
    "relaxation_channel",
    "time_reverse",
    "two_atom_probability",
]

_COL_TOL = 1e-9


class AtomLevel(IntEnum):
    """Circular Rydberg levels, ordered e (highest), g, f (lowest)."""

    E = 0
    G = 1
    F = 2

    @property
    def n_qubit(self) -> int:
        return 1 if self is AtomLevel.E else 0

    @property
    def n_demon(self) -> int:
        return 0 if self is AtomLevel.F else 1


def encode_atom(n_qubit: int, n_demon: int) -> AtomLevel:
    """Atomic level encoding the logical pair (n_Q, n_D).

    The pair (1, 0) is unencodable in three levels; requesting it raises.
    """
    try:
        return {(1, 1): AtomLevel.E, (0, 1): AtomLevel.G, (0, 0): AtomLevel.F}[
            (n_qubit, n_demon)
        ]
    except KeyError:
        raise ValueError(
            f"logical state (n_Q={n_qubit}, n_D={n_demon}) has no atomic encoding"
        ) from None


def physical_labels(dims: SystemDims = DEFAULT_DIMS) -> tuple:
    return tuple(
        (level, n) for level in AtomLevel for n in range(dims.dim_cavity_full)
    )


def abstract_labels(dims: SystemDims = DEFAULT_DIMS) -> tuple:
    return tuple(
        (q, d, n)
        for q in range(dims.dim_qubit)
        for d in range(dims.dim_demon)
        for n in range(dims.dim_cavity_full)
    )


@dataclass(frozen=True, eq=False)
class StochasticChannel:
    """Column-stochastic matrix ``matrix[to, from]`` over labelled basis states."""

    matrix: np.ndarray
    labels: tuple

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("channel matrix must be square")
        if len(self.labels) != m.shape[0]:
            raise ValueError("label count does not match matrix dimension")
        if np.any(m < -1e-15) or np.any(m > 1.0 + 1e-12):
            raise ValueError("channel entries must lie in [0, 1]")
        cols = m.sum(axis=0)
        if np.any(np.abs(cols - 1.0) > _COL_TOL):
            worst = float(np.abs(cols - 1.0).max())
            raise ValueError(f"columns must sum to 1 (worst deviation {worst:.3e})")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def identity_channel(labels) -> StochasticChannel:
    return StochasticChannel(np.eye(len(labels)), tuple(labels))


def compose(outer: StochasticChannel, inner: StochasticChannel) -> StochasticChannel:
    """Channel equal to ``inner`` followed by ``outer``."""
    if outer.labels != inner.labels:
        raise ValueError("cannot compose channels over different bases")
    return StochasticChannel(outer.matrix @ inner.matrix, outer.labels)


def apply(channel: StochasticChannel, dist: np.ndarray) -> np.ndarray:
    p = np.asarray(dist, dtype=float).ravel()
    if p.size != channel.dim:
        raise ValueError("distribution size does not match channel basis")
    return channel.matrix @ p


def time_reverse(channel: StochasticChannel) -> StochasticChannel:
    """Transpose of a deterministic (permutation) channel.

    Only permutations have a channel inverse that is again a channel; for a
    noisy map the transpose is not stochastic, so reversal is refused and the
    caller must instead re-apply the noisy elements around the reversed
    deterministic core (which is what the backward protocol does).
    """
    m = channel.matrix
    is_perm = (
        np.all((m < 1e-12) | (np.abs(m - 1.0) < 1e-12))
        and np.all(np.abs(m.sum(axis=0) - 1.0) < 1e-12)
        and np.all(np.abs(m.sum(axis=1) - 1.0) < 1e-12)
    )
    if not is_perm:
        raise ValueError("only permutation channels can be time-reversed")
    return StochasticChannel(np.round(m).T, channel.labels)


# ---------------------------------------------------------------------------
# Error model


def _default_confusion() -> np.ndarray:
    # detect-row, true-column over (e, g, f); diagonals fixed by normalization
    return np.array(
        [
            [0.98, 0.05, 0.01],
            [0.02, 0.93, 0.05],
            [0.00, 0.02, 0.94],
        ]
    )


def _default_cavity_prep() -> np.ndarray:
    # row = target Fock state, column = actually prepared photon number
    return np.array(
        [
            [1.00, 0.00, 0.00, 0.00, 0.00],
            [0.08, 0.76, 0.16, 0.00, 0.00],
            [0.00, 0.15, 0.75, 0.10, 0.00],
            [0.00, 0.00, 0.17, 0.73, 0.10],
        ]
    )


_SINGLE_ERROR_NAMES = (
    "eps_prep",
    "eps_read",
    "eps_feed",
    "eps_meas",
    "cavity_prep",
    "relax_atom",
    "relax_cavity",
)


@dataclass(frozen=True, eq=False)
class ErrorModel:
    """Imperfection parameters of the physical protocol.

    All probabilities are per-run; defaults are the measured values of the
    experiment this models.  ``nbar_atoms`` and ``detect_eff`` only feed the
    two-atom-event diagnostic, never the dynamics.
    """

    eps_prep: float = 0.1
    eps_read: float = 0.11
    eps_feed: float = 0.03
    confusion: np.ndarray = field(default_factory=_default_confusion)
    cavity_prep: np.ndarray = field(default_factory=_default_cavity_prep)
    relax_atom_prob: float = 0.0
    relax_cavity_prob: float = 0.0
    nbar_atoms: float = 0.22
    detect_eff: float = 0.5

    def __post_init__(self) -> None:
        for name in ("eps_prep", "eps_read", "eps_feed", "relax_atom_prob",
                     "relax_cavity_prob", "detect_eff"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
        if self.nbar_atoms < 0.0:
            raise ValueError("nbar_atoms must be non-negative")
        conf = np.asarray(self.confusion, dtype=float)
        object.__setattr__(self, "confusion", conf)
        if conf.shape != (3, 3):
            raise ValueError("confusion matrix must be 3x3 over (e, g, f)")
        if np.any(conf < 0) or np.any(np.abs(conf.sum(axis=0) - 1.0) > _COL_TOL):
            raise ValueError("confusion columns must be distributions")
        prep = np.asarray(self.cavity_prep, dtype=float)
        object.__setattr__(self, "cavity_prep", prep)
        if prep.ndim != 2 or prep.shape[1] < prep.shape[0]:
            raise ValueError("cavity_prep must map targets into a larger Fock space")
        if np.any(prep < 0) or np.any(np.abs(prep.sum(axis=1) - 1.0) > _COL_TOL):
            raise ValueError("cavity_prep rows must be distributions")

    @classmethod
    def ideal(cls) -> "ErrorModel":
        base = cls()
        return replace(
            base,
            eps_prep=0.0,
            eps_read=0.0,
            eps_feed=0.0,
            confusion=np.eye(3),
            cavity_prep=np.eye(base.cavity_prep.shape[0], base.cavity_prep.shape[1]),
            relax_atom_prob=0.0,
            relax_cavity_prob=0.0,
        )

    @classmethod
    def single(cls, name: str, base: "ErrorModel | None" = None) -> "ErrorModel":
        """Model with only the named error channel active (others idealized)."""
        if name not in _SINGLE_ERROR_NAMES:
            raise ValueError(
                f"unknown error channel {name!r}; expected one of {_SINGLE_ERROR_NAMES}"
            )
        source = base if base is not None else cls()
        out = cls.ideal()
        out = replace(out, nbar_atoms=source.nbar_atoms, detect_eff=source.detect_eff)
        if name == "eps_meas":
            return replace(out, confusion=source.confusion)
        if name == "cavity_prep":
            return replace(out, cavity_prep=source.cavity_prep)
        if name == "relax_atom":
            return replace(out, relax_atom_prob=source.relax_atom_prob)
        if name == "relax_cavity":
            return replace(out, relax_cavity_prob=source.relax_cavity_prob)
        return replace(out, **{name: getattr(source, name)})

    @property
    def is_ideal(self) -> bool:
        return (
            self.eps_prep == self.eps_read == self.eps_feed == 0.0
            and self.relax_atom_prob == self.relax_cavity_prob == 0.0
            and np.array_equal(self.confusion, np.eye(3))
            and np.array_equal(
                self.cavity_prep,
                np.eye(self.cavity_prep.shape[0], self.cavity_prep.shape[1]),
            )
        )


# ---------------------------------------------------------------------------
# Elementary preparations


def prepare_atom(level: AtomLevel, eps_prep: float = 0.0) -> np.ndarray:
    """Distribution over (e, g, f) from preparing the given level.

    Only the e preparation (circularization to the upper level) is imperfect:
    with probability ``eps_prep`` the atom is left in g instead.
    """
    out = np.zeros(3)
    if level is AtomLevel.E:
        out[AtomLevel.E] = 1.0 - eps_prep
        out[AtomLevel.G] = eps_prep
    else:
        out[level] = 1.0
    return out


def prepare_cavity(
    n_target: int,
    model: ErrorModel,
    dims: SystemDims = DEFAULT_DIMS,
    ideal: bool = False,
) -> np.ndarray:
    """Photon-number distribution from preparing the Fock target ``n_target``.

    Targets covered by the model's impurity table use it; targets beyond the
    table (possible only in the backward protocol, which can start from the
    topmost evolved level) are prepared exactly.
    """
    full = dims.dim_cavity_full
    if not 0 <= n_target < full:
        raise ValueError(f"Fock target {n_target} outside the evolved space")
    out = np.zeros(full)
    if ideal or n_target >= model.cavity_prep.shape[0]:
        out[n_target] = 1.0
        return out
    row = model.cavity_prep[n_target]
    out[: row.size] = row
    return out


# ---------------------------------------------------------------------------
# Protocol-step channels


def _lift_atom(mat3: np.ndarray, dims: SystemDims) -> StochasticChannel:
    cav = np.eye(dims.dim_cavity_full)
    return StochasticChannel(np.kron(mat3, cav), physical_labels(dims))


def _pulse_matrix(eps_read: float) -> np.ndarray:
    swap_gf = np.eye(3)[:, [0, 2, 1]]
    return (1.0 - eps_read) * swap_gf + eps_read * np.eye(3)


def readout_channel(
    eps_read: float = 0.0,
    dims: SystemDims = DEFAULT_DIMS,
    mode: str = "physical",
) -> StochasticChannel:
    """Memory-write step.

    physical: the g<->f pi-pulse on the atom (e untouched, cavity spectator),
    failing to transfer with probability ``eps_read``.  The pulse is its own
    inverse, so the same channel serves forward and backward runs.

    abstract: flip the memory bit iff the qubit is in its ground state, with
    the same failure probability.
    """
    if mode == "physical":
        return _lift_atom(_pulse_matrix(eps_read), dims)
    if mode != "abstract":
        raise ValueError(f"unknown mode {mode!r}")
    labels = abstract_labels(dims)
    perm = np.zeros((len(labels), len(labels)))
    index = {lab: i for i, lab in enumerate(labels)}
    for q, d, n in labels:
        target = (q, 1 - d, n) if q == 0 else (q, d, n)
        perm[index[target], index[(q, d, n)]] = 1.0
    mat = (1.0 - eps_read) * perm + eps_read * np.eye(len(labels))
    return StochasticChannel(mat, labels)


def feedback_channel(
    eps_feed: float = 0.0,
    dims: SystemDims = DEFAULT_DIMS,
    mode: str = "physical",
) -> StochasticChannel:
    """Conditional photon exchange.

    physical: resonant swap on the (e, g) doublet — e,n -> g,n+1 and
    g,n+1 -> e,n — with g,0 dark (no photon to absorb), f a spectator, and
    the topmost pair truncated (e at the highest kept Fock state is fixed).
    Fails, acting as the identity, with probability ``eps_feed``.

    abstract: the same exchange on (n_Q, n_C), applied only when the memory
    bit is 1.
    """
    full = dims.dim_cavity_full
    if mode == "physical":
        labels = physical_labels(dims)
        index = {lab: i for i, lab in enumerate(labels)}
        perm = np.eye(len(labels))
        for n in range(full - 1):
            a = index[(AtomLevel.E, n)]
            b = index[(AtomLevel.G, n + 1)]
            perm[[a, b], [a, b]] = 0.0
            perm[a, b] = perm[b, a] = 1.0
        mat = (1.0 - eps_feed) * perm + eps_feed * np.eye(len(labels))
        return StochasticChannel(mat, labels)
    if mode != "abstract":
        raise ValueError(f"unknown mode {mode!r}")
    labels = abstract_labels(dims)
    index = {lab: i for i, lab in enumerate(labels)}
    perm = np.eye(len(labels))
    for n in range(full - 1):
        a = index[(1, 1, n)]
        b = index[(0, 1, n + 1)]
        perm[[a, b], [a, b]] = 0.0
        perm[a, b] = perm[b, a] = 1.0
    mat = (1.0 - eps_feed) * perm + eps_feed * np.eye(len(labels))
    return StochasticChannel(mat, labels)


def detection_channel(
    confusion: np.ndarray,
    dims: SystemDims = DEFAULT_DIMS,
) -> StochasticChannel:
    """State-selective ionization readout: true level -> detected level."""
    conf = np.asarray(confusion, dtype=float)
    if conf.shape != (3, 3):
        raise ValueError("confusion matrix must be 3x3 over (e, g, f)")
    return _lift_atom(conf, dims)


def relaxation_channel(
    model: ErrorModel,
    dims: SystemDims = DEFAULT_DIMS,
) -> StochasticChannel:
    """One-step classical decay during the flight to the detector.

    Atom: e -> g and g -> f, each with probability ``relax_atom_prob`` (single
    step, no double decay).  Cavity: n -> n-1 with probability
    ``n * relax_cavity_prob``.
    """
    pa = model.relax_atom_prob
    atom = np.array(
        [
            [1.0 - pa, 0.0, 0.0],
            [pa, 1.0 - pa, 0.0],
            [0.0, pa, 1.0],
        ]
    )
    full = dims.dim_cavity_full
    cav = np.zeros((full, full))
    for n in range(full):
        down = min(1.0, n * model.relax_cavity_prob)
        cav[n, n] = 1.0 - down
        if n > 0:
            cav[n - 1, n] = down
    return StochasticChannel(np.kron(atom, cav), physical_labels(dims))


def two_atom_probability(nbar: float = 0.22, eff: float = 0.5) -> float:
    """Probability that a single detected atom came from a two-atom sample.

    Samples carry a Poisson(``nbar``) atom number and each atom is detected
    independently with efficiency ``eff``; three-atom samples are neglected.
    Diagnostic only — two-atom events are not part of the simulated dynamics.
    """
    if nbar < 0 or not 0.0 <= eff <= 1.0:
        raise ValueError("need nbar >= 0 and eff in [0, 1]")
    p1 = math.exp(-nbar) * nbar
    p2 = math.exp(-nbar) * nbar**2 / 2.0
    single = eff * p1
    pair = 2.0 * eff * (1.0 - eff) * p2
    if single + pair == 0.0:
        return 0.0
    return pair / (single + pair)
