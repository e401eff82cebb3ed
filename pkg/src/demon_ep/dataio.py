"""Reading and writing the experiment-facing file formats.

Three formats live here:

* **Conditional probability tables** — whitespace-separated ASCII with label
  headers, the format measured tables are published in.  Forward tables are
  row-stochastic: row label ``(n_Q,n_C)``, column label ``(m_Q,k,m_C)``, each
  row the outcome distribution of one initial state.  Backward tables are
  column-stochastic: row label ``(n_Q,n_C)`` now on the evolved cavity range,
  each *column* the final-state distribution of one prepared configuration.
* **Sweep CSV** — one row per bias point with the six estimators; numbers at
  full double precision (17 significant digits), infinities spelled ``inf``,
  so identical runs produce identical bytes.
* **Run configuration** — flat ``key = value`` text; unknown keys are
  rejected rather than ignored.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .channels import ErrorModel, _SINGLE_ERROR_NAMES

__all__ = [
    "ConditionalTable",
    "RunConfig",
    "conditional_from_table",
    "kelvin_to_beta_omega",
    "load_config",
    "parse_table",
    "serialize_table",
    "sweep_csv_text",
    "write_sweep_csv",
    "write_table",
]

ORIENTATIONS = ("forward-rows-initial", "backward-rows-final")

# SI-exact defined values (2019 redefinition)
PLANCK_CONSTANT = 6.62607015e-34  # J s
BOLTZMANN_CONSTANT = 1.380649e-23  # J / K

_CLAMP_TOL = 1e-6
_SOFT_TOL = 1e-9
_HARD_TOL = 1e-3


def kelvin_to_beta_omega(temperature_k: float, frequency_ghz: float) -> float:
    """Dimensionless beta * omega = h f / (k_B T) for a mode at f GHz."""
    if temperature_k <= 0 or frequency_ghz <= 0:
        raise ValueError("temperature and frequency must be positive")
    return (
        PLANCK_CONSTANT * frequency_ghz * 1e9 / (BOLTZMANN_CONSTANT * temperature_k)
    )


@dataclass(frozen=True, eq=False)
class ConditionalTable:
    """Labelled conditional-probability matrix in one of the two orientations.

    Stochasticity is checked along the orientation's normalized direction:
    deviations up to 1e-9 pass silently, up to 1e-3 warn (measured tables
    carry finite statistics), and anything larger is rejected.
    """

    row_labels: tuple
    col_labels: tuple
    values: np.ndarray
    orientation: str

    def __post_init__(self) -> None:
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}")
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "row_labels", tuple(map(tuple, self.row_labels)))
        object.__setattr__(self, "col_labels", tuple(map(tuple, self.col_labels)))
        if vals.shape != (len(self.row_labels), len(self.col_labels)):
            raise ValueError("values shape does not match labels")
        if len(set(self.row_labels)) != len(self.row_labels):
            raise ValueError("duplicate row label")
        if len(set(self.col_labels)) != len(self.col_labels):
            raise ValueError("duplicate column label")
        want_rank = {"forward-rows-initial": 2, "backward-rows-final": 2}[self.orientation]
        for lab in self.row_labels:
            if len(lab) != want_rank:
                raise ValueError(f"row label {lab} must have {want_rank} entries")
        for lab in self.col_labels:
            if len(lab) != 3:
                raise ValueError(f"column label {lab} must have 3 entries")
        if np.any(vals < 0) or np.any(vals > 1):
            raise ValueError("conditional probabilities must lie in [0, 1]")
        axis = 1 if self.orientation == "forward-rows-initial" else 0
        sums = vals.sum(axis=axis)
        worst = float(np.abs(sums - 1.0).max()) if sums.size else 0.0
        if worst > _HARD_TOL:
            raise ValueError(
                f"{self.orientation} table not stochastic (worst sum error {worst:.3e})"
            )
        if worst > _SOFT_TOL:
            warnings.warn(
                f"{self.orientation} table sums off by {worst:.2e} "
                "(tolerated, likely measured input)",
                stacklevel=2,
            )


def _parse_label(token: str) -> tuple:
    body = token.strip()
    if not (body.startswith("(") and body.endswith(")")):
        raise ValueError(f"malformed state label {token!r}")
    try:
        return tuple(int(part) for part in body[1:-1].split(","))
    except ValueError:
        raise ValueError(f"malformed state label {token!r}") from None


def _clamp(value: float, where: str) -> float:
    if 0.0 <= value <= 1.0:
        return value
    excess = max(-value, value - 1.0)
    if excess > _CLAMP_TOL:
        raise ValueError(f"probability {value!r} at {where} outside [0, 1]")
    warnings.warn(f"clamping probability {value!r} at {where}", stacklevel=3)
    return min(1.0, max(0.0, value))


def parse_table(source, orientation: str) -> ConditionalTable:
    """Parse an ASCII conditional table from a path or file-like object.

    Blank lines and lines starting with ``#`` are skipped.  The first content
    line holds the column labels (optionally preceded by a corner token);
    every following line is a row label followed by one value per column.
    Values barely outside [0, 1] (within 1e-6) are clamped with a warning.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text()
    rows: list[list[str]] = []
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        rows.append(stripped.split())
    if len(rows) < 2:
        raise ValueError("table needs a header line and at least one data row")
    header = rows[0]
    data = rows[1:]
    n_values = len(data[0]) - 1
    if n_values < 1:
        raise ValueError("data rows need a label plus at least one value")
    if len(header) == n_values + 1:
        header = header[1:]  # drop corner token
    if len(header) != n_values:
        raise ValueError(
            f"header has {len(header)} column labels but rows carry {n_values} values"
        )
    col_labels = tuple(_parse_label(tok) for tok in header)
    row_labels = []
    values = np.zeros((len(data), n_values))
    for i, row in enumerate(data):
        if len(row) != n_values + 1:
            raise ValueError(f"row {i + 1} has {len(row) - 1} values, expected {n_values}")
        label = _parse_label(row[0])
        row_labels.append(label)
        for j, tok in enumerate(row[1:]):
            try:
                raw = float(tok)
            except ValueError:
                raise ValueError(f"bad number {tok!r} at row {label}") from None
            values[i, j] = _clamp(raw, f"row {label}, column {col_labels[j]}")
    return ConditionalTable(tuple(row_labels), col_labels, values, orientation)


def _label_str(label: tuple) -> str:
    return "(" + ",".join(str(int(x)) for x in label) + ")"


def serialize_table(table: ConditionalTable, comment: str | None = None) -> str:
    """Render a conditional table in the ASCII format :func:`parse_table` reads.

    Full double precision, fixed column order — serializing the same table
    twice gives identical text.
    """
    out = io.StringIO()
    if comment:
        for line in comment.splitlines():
            out.write(f"# {line}\n")
    out.write("state " + " ".join(_label_str(c) for c in table.col_labels) + "\n")
    for label, row in zip(table.row_labels, table.values):
        out.write(_label_str(label) + " " + " ".join(format(v, ".17g") for v in row) + "\n")
    return out.getvalue()


def write_table(table: ConditionalTable, path, comment: str | None = None) -> None:
    Path(path).write_text(serialize_table(table, comment))


def conditional_from_table(traj_table) -> ConditionalTable:
    """Conditional-probability view of a simulated trajectory table.

    Forward tables yield the row-stochastic outcome table; backward tables
    the column-stochastic final-state table (with rows covering the evolved
    cavity range, so columns still sum to one).  Uses the conditionals the
    table was built from when available, falling back to dividing out the
    thermal priors.  Unpopulated (m_Q=1, k=0) columns are omitted, matching
    the published format of physically encoded runs.
    """
    dims = traj_table.dims
    init, full = dims.dim_cavity_init, dims.dim_cavity_full
    cond = traj_table.conditionals
    if traj_table.direction == "forward":
        if cond is None:
            cond = _forward_cond_from_probs(traj_table)
        include_unencodable = bool(np.any(cond[1, 0] > 0.0))
        col_labels = tuple(
            (m_q, k, m_c)
            for m_q in range(2)
            for k in range(2)
            if (m_q, k) != (1, 0) or include_unencodable
            for m_c in range(full)
        )
        row_labels = tuple((n_q, n_c) for n_q in range(2) for n_c in range(init))
        values = np.array(
            [
                [cond[m_q, k, m_c, n_q, n_c] for (m_q, k, m_c) in col_labels]
                for (n_q, n_c) in row_labels
            ]
        )
        return ConditionalTable(row_labels, col_labels, values, "forward-rows-initial")
    if cond is None:
        raise ValueError(
            "backward trajectory tables cannot be deconvolved without their "
            "conditionals (labeled entries alone miss the unlabeled outcomes)"
        )
    include_unencodable = bool(np.any(cond[:, :, 1, 0, :] > 0.0))
    col_labels = tuple(
        (m_q, k, m_c)
        for m_q in range(2)
        for k in range(2)
        if (m_q, k) != (1, 0) or include_unencodable
        for m_c in range(full)
    )
    row_labels = tuple((n_q, n_c) for n_q in range(2) for n_c in range(full))
    values = np.array(
        [
            [cond[n_q, n_c, m_q, k, m_c] for (m_q, k, m_c) in col_labels]
            for (n_q, n_c) in row_labels
        ]
    )
    return ConditionalTable(row_labels, col_labels, values, "backward-rows-final")


def _forward_cond_from_probs(traj_table) -> np.ndarray:
    from .statespace import gibbs_distribution  # local to avoid import noise

    dims = traj_table.dims
    gibbs = traj_table.gibbs
    p_q = gibbs_distribution(gibbs.beta_qubit, 2)
    p_c = gibbs_distribution(gibbs.beta_cavity, dims.dim_cavity_init)
    prior = np.einsum("n,c->nc", p_q, p_c)
    return np.einsum("nkcmf,nc->mkfnc", traj_table.probs, 1.0 / prior)


# ---------------------------------------------------------------------------
# Sweep CSV

_ALL_COLUMNS = (
    "dbeta_tilde",
    "sigma1",
    "sigma2",
    "sigma3",
    "sigma4",
    "sigma5",
    "sigma6",
    "heat_C",
    "mean_info",
    "flags",
)
_FORWARD_COLUMNS = (
    "dbeta_tilde",
    "sigma1",
    "sigma2",
    "sigma6",
    "heat_C",
    "mean_info",
    "flags",
)


def _format_number(value: float) -> str:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return format(value, ".17g")


def sweep_csv_text(results, forward_only: bool = False) -> str:
    """Estimator rows as CSV text with deterministic full-precision numbers.

    ``results`` is an iterable of objects exposing ``as_row()``, one row per
    bias point, in the given order.  ``forward_only`` keeps only the columns
    computable without the backward protocol.
    """
    columns = _FORWARD_COLUMNS if forward_only else _ALL_COLUMNS
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for result in results:
        row = result.as_row()
        writer.writerow(
            [
                row[col] if col == "flags" else _format_number(float(row[col]))
                for col in columns
            ]
        )
    return buffer.getvalue()


def write_sweep_csv(results, path, forward_only: bool = False) -> None:
    """Write :func:`sweep_csv_text` output to ``path``."""
    Path(path).write_text(sweep_csv_text(results, forward_only))


# ---------------------------------------------------------------------------
# Run configuration

_CONFUSION_KEYS = {
    "eta_e_g": (0, 1),
    "eta_e_f": (0, 2),
    "eta_g_e": (1, 0),
    "eta_g_f": (1, 2),
    "eta_f_e": (2, 0),
    "eta_f_g": (2, 1),
}


@dataclass(frozen=True)
class RunConfig:
    """Everything a command run needs, with the experiment's defaults."""

    temperature_kelvin: float = 2.8
    frequency_ghz: float = 51.0
    dbeta_start: float = -6.0
    dbeta_stop: float = 6.0
    dbeta_step: float = 0.25
    mode: str = "ideal"
    single_error: str | None = None
    idealized_backward: bool = False
    heat_from_atom: bool = True
    sigma_tol: float = 1e-9
    floor: float | None = None
    jobs: int = 1
    out: str | None = None
    eps_prep: float | None = None
    eps_read: float | None = None
    eps_feed: float | None = None
    relax_atom_prob: float | None = None
    relax_cavity_prob: float | None = None
    nbar_atoms: float | None = None
    detect_eff: float | None = None
    confusion_overrides: tuple = ()
    cavity_prep_overrides: tuple = ()

    def __post_init__(self) -> None:
        if self.mode not in ("ideal", "physical"):
            raise ValueError(f"mode must be ideal or physical, got {self.mode!r}")
        if self.single_error is not None and self.single_error not in _SINGLE_ERROR_NAMES:
            raise ValueError(
                f"single_error must be one of {_SINGLE_ERROR_NAMES}, got {self.single_error!r}"
            )
        if self.dbeta_step <= 0:
            raise ValueError("dbeta_step must be positive")
        if self.dbeta_stop < self.dbeta_start:
            raise ValueError("dbeta_stop must be >= dbeta_start")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.floor is not None and not 0 < self.floor < 1:
            raise ValueError("floor must lie in (0, 1)")

    @property
    def beta_cavity(self) -> float:
        return kelvin_to_beta_omega(self.temperature_kelvin, self.frequency_ghz)

    def grid(self) -> np.ndarray:
        count = int(round((self.dbeta_stop - self.dbeta_start) / self.dbeta_step)) + 1
        values = self.dbeta_start + self.dbeta_step * np.arange(count)
        return values[values <= self.dbeta_stop + 1e-9]

    def build_error_model(self) -> ErrorModel:
        base = ErrorModel()
        overrides = {}
        for name in (
            "eps_prep",
            "eps_read",
            "eps_feed",
            "relax_atom_prob",
            "relax_cavity_prob",
            "nbar_atoms",
            "detect_eff",
        ):
            value = getattr(self, name)
            if value is not None:
                overrides[name] = value
        if self.confusion_overrides:
            conf = base.confusion.copy()
            for key, value in self.confusion_overrides:
                conf[_CONFUSION_KEYS[key]] = value
            for col in range(3):
                off = sum(conf[r, col] for r in range(3) if r != col)
                if off > 1.0:
                    raise ValueError(f"confusion column {col} exceeds unit mass")
                conf[col, col] = 1.0 - off
            overrides["confusion"] = conf
        if self.cavity_prep_overrides:
            prep = base.cavity_prep.copy()
            for target, row in self.cavity_prep_overrides:
                if not 0 <= target < prep.shape[0]:
                    raise ValueError(f"cavity_prep target {target} out of range")
                new_row = np.zeros(prep.shape[1])
                for level, p in row:
                    if not 0 <= level < prep.shape[1]:
                        raise ValueError(f"cavity_prep level {level} out of range")
                    new_row[level] = p
                if abs(new_row.sum() - 1.0) > _CLAMP_TOL:
                    raise ValueError(f"cavity_prep_{target} must sum to 1")
                prep[target] = new_row / new_row.sum()
            overrides["cavity_prep"] = prep
        model = replace(base, **overrides) if overrides else base
        if self.single_error is not None:
            model = ErrorModel.single(self.single_error, base=model)
        return model


_FLOAT_KEYS = {
    "temperature_kelvin",
    "frequency_ghz",
    "dbeta_start",
    "dbeta_stop",
    "dbeta_step",
    "sigma_tol",
    "eps_prep",
    "eps_read",
    "eps_feed",
    "relax_atom_prob",
    "relax_cavity_prob",
    "nbar_atoms",
    "detect_eff",
}
_BOOL_KEYS = {"idealized_backward", "heat_from_atom"}
_STR_KEYS = {"mode", "out"}


def _parse_bool(value: str, key: str) -> bool:
    lowered = value.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"config key {key} needs a boolean, got {value!r}")


def load_config(path=None) -> RunConfig:
    """Load a ``key = value`` configuration file; ``None`` gives defaults.

    Unknown keys are rejected (silent typos in an analysis config are worse
    than a crash).  ``#`` starts a comment, full-line or trailing.
    """
    if path is None:
        return RunConfig()
    kwargs: dict = {}
    confusion: list = []
    cavity: list = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if not value:
            raise ValueError(f"line {lineno}: empty value for {key!r}")
        if key in _FLOAT_KEYS:
            kwargs[key] = float(value)
        elif key in _BOOL_KEYS:
            kwargs[key] = _parse_bool(value, key)
        elif key in _STR_KEYS:
            kwargs[key] = value
        elif key == "jobs":
            kwargs[key] = int(value)
        elif key == "floor":
            kwargs[key] = None if value.lower() == "none" else float(value)
        elif key == "single_error":
            kwargs[key] = None if value.lower() == "none" else value
        elif key in _CONFUSION_KEYS:
            confusion.append((key, float(value)))
        elif key.startswith("cavity_prep_"):
            target = int(key.removeprefix("cavity_prep_"))
            row = []
            for pair in value.split():
                level, _, prob = pair.partition(":")
                row.append((int(level), float(prob)))
            cavity.append((target, tuple(row)))
        else:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
    if confusion:
        kwargs["confusion_overrides"] = tuple(confusion)
    if cavity:
        kwargs["cavity_prep_overrides"] = tuple(cavity)
    return RunConfig(**kwargs)
