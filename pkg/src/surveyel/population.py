"""Finite populations, samples drawn from them, and census solutions.

A population is a frame of N units, each with an outcome ``y``, an
optional auxiliary row ``a`` and a positive size measure ``c`` used for
unequal-probability sampling. Units are identified by 1-based ids in
frame order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError, SingularModelError, ConvergenceError, ValidationError
from .model import EstimatingFunction

Array = np.ndarray


@dataclass(frozen=True)
class Population:
    """A finite population frame.

    Attributes
    ----------
    y : (N,) array
        Outcome per unit.
    c : (N,) array
        Positive size measure per unit.
    a : (N, p_a) array or None
        Auxiliary variables, when the model needs them.
    """

    y: Array
    c: Array
    a: Array | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        c = np.asarray(self.c, dtype=float)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "c", c)
        if y.ndim != 1 or c.ndim != 1 or y.shape != c.shape:
            raise ValidationError("y and c must be 1-d arrays of equal length")
        if y.size == 0:
            raise ValidationError("population is empty")
        if not np.all(np.isfinite(c)) or np.any(c <= 0):
            bad = int(np.argmin(c))
            raise ValidationError(
                f"size measure must be positive and finite; unit id {bad + 1} has c={c[bad]!r}"
            )
        if self.a is not None:
            a = np.asarray(self.a, dtype=float)
            if a.ndim == 1:
                a = a[:, None]
            object.__setattr__(self, "a", a)
            if a.shape[0] != y.size:
                raise ValidationError("a must have one row per unit")

    @property
    def N(self) -> int:
        return self.y.size

    @property
    def ids(self) -> Array:
        """1-based unit ids in frame order."""
        return np.arange(1, self.N + 1)


@dataclass(frozen=True)
class SampleDraw:
    """One realized sample: frame positions, inclusion probabilities, scheme.

    ``indices`` are 0-based positions into the population frame.  ``pi``
    holds the first-order inclusion probabilities of the sampled units under
    the scheme actually run; ``joint_pi`` optionally holds the symmetric
    ``n x n`` matrix of pairwise inclusion probabilities for sampled pairs,
    with ``joint_pi[k, k] == pi[k]``.
    """

    indices: Array
    pi: Array
    scheme: str
    joint_pi: Array | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        pi = np.asarray(self.pi, dtype=float)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "pi", pi)
        if idx.ndim != 1 or pi.ndim != 1 or idx.shape != pi.shape:
            raise ValidationError("indices and pi must be 1-d arrays of equal length")
        if idx.size == 0:
            raise ValidationError("sample is empty")
        if np.unique(idx).size != idx.size:
            raise ValidationError("sample contains duplicate units")
        if np.any(pi <= 0.0) or np.any(pi > 1.0) or not np.all(np.isfinite(pi)):
            raise ValidationError("inclusion probabilities must lie in (0, 1]")
        if self.joint_pi is not None:
            jp = np.asarray(self.joint_pi, dtype=float)
            object.__setattr__(self, "joint_pi", jp)
            n = idx.size
            if jp.shape != (n, n):
                raise ValidationError("joint_pi must be an n x n matrix")
            if not np.allclose(jp, jp.T, atol=1e-12):
                raise ValidationError("joint_pi must be symmetric")
            if not np.allclose(np.diag(jp), pi, atol=1e-12):
                raise ValidationError("joint_pi diagonal must equal pi")

    @property
    def n(self) -> int:
        return self.indices.size


@dataclass(frozen=True)
class SampleData:
    """Observed responses (and auxiliaries) for the sampled units only.

    This is the data argument consumed by the estimation routines; it
    carries no design information, which travels separately as
    visibilities.
    """

    y: Array
    a: Array | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "y", y)
        if y.ndim != 1 or y.size == 0:
            raise ValidationError("y must be a non-empty 1-d array")
        if self.a is not None:
            a = np.asarray(self.a, dtype=float)
            if a.ndim == 1:
                a = a[:, None]
            object.__setattr__(self, "a", a)
            if a.shape[0] != y.size:
                raise ValidationError("a must have one row per observed unit")

    @property
    def n(self) -> int:
        return self.y.size


def sample_data(pop: Population, draw: SampleDraw) -> SampleData:
    """Extract the observed rows of a population selected by a draw."""
    a = pop.a[draw.indices] if pop.a is not None else None
    return SampleData(y=pop.y[draw.indices], a=a)


# ------------------------------------------------------------------ CSV I/O


def load_population(path, col_y: str = "y", col_size: str = "c", col_aux=None) -> Population:
    """Read a population from a CSV file with a header row.

    Parameters
    ----------
    path : str or Path
        CSV file with one row per unit.
    col_y, col_size : str
        Column names for the outcome and the positive size measure.
    col_aux : list of str, optional
        Names of auxiliary columns, in the order the model expects.

    Raises
    ------
    SchemaError
        If a required column is missing or a cell cannot be parsed
        (message names the 1-based file row and the column).
    ValidationError
        If a parsed size is non-positive.
    """
    col_aux = list(col_aux or [])
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, expected a CSV header")
        for col in [col_y, col_size, *col_aux]:
            if col not in reader.fieldnames:
                raise SchemaError(
                    f"{path}: missing required column '{col}' "
                    f"(found: {', '.join(reader.fieldnames)})",
                    column=col,
                )
        ys, cs, aux = [], [], []
        for rownum, row in enumerate(reader, start=2):  # header is file row 1
            def parse(col):
                raw = row.get(col)
                try:
                    return float(raw)
                except (TypeError, ValueError):
                    raise SchemaError(
                        f"{path}: row {rownum}, column '{col}': "
                        f"cannot parse {raw!r} as a number",
                        row=rownum,
                        column=col,
                    ) from None

            ys.append(parse(col_y))
            c = parse(col_size)
            if not np.isfinite(c) or c <= 0:
                raise ValidationError(
                    f"{path}: row {rownum}, column '{col_size}': "
                    f"size must be positive, got {c!r}"
                )
            cs.append(c)
            if col_aux:
                aux.append([parse(col) for col in col_aux])

    return Population(
        y=np.array(ys), c=np.array(cs), a=np.array(aux) if col_aux else None
    )


def save_population(pop: Population, path, col_y: str = "y", col_size: str = "c",
                    col_aux=None) -> None:
    """Write a population as CSV with full float precision (round-trippable)."""
    if pop.a is not None:
        col_aux = list(col_aux or [f"a{j + 1}" for j in range(pop.a.shape[1])])
        if len(col_aux) != pop.a.shape[1]:
            raise ValidationError("col_aux length must match the number of aux columns")
    else:
        col_aux = []
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([col_y, col_size, *col_aux])
        for i in range(pop.N):
            row = [repr(float(pop.y[i])), repr(float(pop.c[i]))]
            if col_aux:
                row += [repr(float(v)) for v in pop.a[i]]
            writer.writerow(row)


# ------------------------------------------------------------------ synthesis


def synth_population(n_units: int, prop_true: float, size_law=("lognormal", 10.0, 1.0),
                     size_outcome_corr: float = 0.0, seed=None) -> Population:
    """Generate a binary-outcome population with controllable size dependence.

    Exactly ``round(n_units * prop_true)`` units get ``y = 1``.  Sizes follow
    ``size_law`` — ``("lognormal", mu, sigma)`` or ``("pareto", alpha, x_min)``
    — and a Gaussian copula couples size and outcome: the latent normal
    driving sizes correlates with the latent normal whose top-ranked units
    win, with correlation ``size_outcome_corr``.  The knob sets the copula
    correlation, not the realized y–c rank correlation (which is attenuated
    by dichotomizing y).  Negative values put winners on smaller units.

    Deterministic for a fixed seed.
    """
    if n_units < 2:
        raise ValidationError("need at least 2 units")
    if not 0.0 <= prop_true <= 1.0:
        raise ValidationError("prop_true must lie in [0, 1]")
    k = round(n_units * prop_true)
    if prop_true > 0 and k < 1:
        raise ValidationError(
            f"prop_true={prop_true} with n_units={n_units} rounds to zero winners"
        )
    if not -1.0 < size_outcome_corr < 1.0:
        raise ValidationError("size_outcome_corr must lie in (-1, 1)")

    rng = np.random.default_rng(seed)
    rho = float(size_outcome_corr)
    z1 = rng.standard_normal(n_units)
    z2 = rho * z1 + np.sqrt(1.0 - rho * rho) * rng.standard_normal(n_units)

    law = tuple(size_law)
    kind = law[0]
    if kind == "lognormal":
        _, mu, sigma = law
        if sigma < 0:
            raise ValidationError("lognormal sigma must be non-negative")
        c = np.exp(float(mu) + float(sigma) * z1)
    elif kind == "pareto":
        _, alpha, x_min = law
        if alpha <= 0 or x_min <= 0:
            raise ValidationError("pareto needs alpha > 0 and x_min > 0")
        # inverse CDF at u = Phi(z1); ndtr is the standard normal CDF
        from scipy.special import ndtr

        u = ndtr(z1)
        u = np.clip(u, 1e-15, 1.0 - 1e-15)
        c = float(x_min) * (1.0 - u) ** (-1.0 / float(alpha))
    else:
        raise ValidationError(f"unknown size law '{kind}'; use 'lognormal' or 'pareto'")

    y = np.zeros(n_units)
    if k > 0:
        winners = np.argsort(z2)[-k:]
        y[winners] = 1.0
    return Population(y=y, c=c)


# ------------------------------------------------------------------ census


def census_solution(model: EstimatingFunction, pop: Population, init=None,
                    tol_factor: float = 1e-10, max_iter: int = 100) -> Array:
    """Solve ``sum_i psi(theta, y_i, a_i) = 0`` over the whole population.

    Damped Newton with step halving; converges when the residual norm is
    at most ``tol_factor * N``. Returns the length-``p`` parameter array.
    """
    y, a = pop.y, pop.a
    if init is None:
        theta = _default_census_init(model, pop)
    else:
        theta = np.atleast_1d(np.asarray(init, dtype=float)).copy()
    tol = tol_factor * pop.N

    def score(th):
        return model.psi(th, y, a).sum(axis=0)

    s = score(theta)
    for _ in range(max_iter):
        norm = np.linalg.norm(s)
        if norm <= tol:
            return theta
        jac = model.dpsi(theta, y, a).sum(axis=0)
        try:
            step = np.linalg.solve(jac, -s)
        except np.linalg.LinAlgError:
            raise SingularModelError(
                "singular population Jacobian in census solve"
            ) from None
        t = 1.0
        while t >= 1e-12:
            cand = theta + t * step
            s_new = score(cand)
            if np.linalg.norm(s_new) < norm:
                theta, s = cand, s_new
                break
            t *= 0.5
        else:
            raise ConvergenceError("census Newton could not reduce the residual")
    if np.linalg.norm(score(theta)) <= tol:
        return theta
    raise ConvergenceError(f"census Newton did not converge in {max_iter} iterations")


def _default_census_init(model: EstimatingFunction, pop: Population) -> Array:
    if model.name in ("proportion", "mean"):
        v = float(np.mean(pop.y))
        lo, hi = model.domain
        if np.isfinite(lo[0]) or np.isfinite(hi[0]):
            span = 1e-6
            v = min(max(v, lo[0] + span), hi[0] - span)
        return np.array([v])
    if pop.a is not None:
        # least-squares start works for both regression scores
        coef, *_ = np.linalg.lstsq(pop.a, pop.y, rcond=None)
        return np.asarray(coef, dtype=float)
    return np.zeros(model.p)
