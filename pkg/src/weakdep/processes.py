"""Stationary bounded dependent processes with exactly computable laws.

Two process families are provided:

* :class:`FiniteChain` — a stationary finite-state Markov chain carrying a
  centered observable whose values lie on a rational lattice
  ``{integer * step}``.  The lattice makes partial sums exactly representable
  as integers, which the dependence-coefficient and block-distribution code
  relies on.
* :class:`LsvProcess` — forward orbits of the intermittent interval map
  ``T(x) = x(1 + 2^g x^g)`` on ``[0, 1/2)`` and ``2x - 1`` on ``[1/2, 1]``,
  with a bounded observable.  Stationary sampling is approximated by a
  uniform start plus a burn-in.

Sampling is deterministic given ``(process, n, seed, replicate)``; see
:mod:`weakdep.rng` for the substream scheme.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .rng import Domain, path_stream

ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-10
CENTER_TOL = 1e-10
LATTICE_SNAP_TOL = 1e-9
# Exact recentering refines the lattice by the denominator of the stationary
# mean; beyond this the integer representation stops being practical.
MAX_LATTICE_REFINEMENT = 10**6


def _as_exact_rows(transition: np.ndarray) -> list[list[Fraction]]:
    """Exact row-normalized copy of a float transition matrix.

    Floats are dyadic rationals, so ``Fraction(x)`` is lossless; rows are then
    renormalized exactly so that the stationary solve sees a genuinely
    stochastic matrix.
    """
    rows = []
    for row in transition:
        exact = [Fraction(float(x)) for x in row]
        total = sum(exact)
        if total <= 0:
            raise ValueError("transition row with nonpositive mass")
        rows.append([x / total for x in exact])
    return rows


def _exact_stationary(rows: list[list[Fraction]]) -> list[Fraction]:
    """Unique probability vector pi with pi P = pi, by exact elimination.

    Raises ``ValueError("non-unique stationary law")`` when the fixed space of
    the transpose has dimension != 1 (reducible with several closed classes,
    or the identity map).
    """
    n = len(rows)
    # a = P^T - I
    a = [[rows[j][i] - (Fraction(1) if i == j else Fraction(0)) for j in range(n)]
         for i in range(n)]
    pivot_cols: list[int] = []
    r = 0
    for c in range(n):
        pr = next((i for i in range(r, n) if a[i][c] != 0), None)
        if pr is None:
            continue
        a[r], a[pr] = a[pr], a[r]
        inv = a[r][c]
        a[r] = [x / inv for x in a[r]]
        for i in range(n):
            if i != r and a[i][c] != 0:
                f = a[i][c]
                a[i] = [x - f * y for x, y in zip(a[i], a[r])]
        pivot_cols.append(c)
        r += 1
    if r != n - 1:
        raise ValueError("non-unique stationary law")
    free = next(c for c in range(n) if c not in pivot_cols)
    x = [Fraction(0)] * n
    x[free] = Fraction(1)
    for row_idx, c in enumerate(pivot_cols):
        x[c] = -a[row_idx][free]
    total = sum(x)
    if total == 0:
        raise ValueError("non-unique stationary law")
    pi = [v / total for v in x]
    if any(p < 0 for p in pi):
        raise ValueError("non-unique stationary law")
    return pi


def _snap_to_lattice(values: Sequence[float], step: float) -> np.ndarray:
    ints = []
    for v in values:
        k = round(float(v) / step)
        if abs(k * step - float(v)) > LATTICE_SNAP_TOL * max(1.0, abs(float(v))):
            raise ValueError(
                f"value {v!r} is off the lattice of step {step!r}")
        ints.append(k)
    return np.asarray(ints, dtype=np.int64)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class FiniteChain:
    """Stationary finite-state chain with a centered lattice observable.

    ``observable == obs_int * step`` exactly; the stationary mean of the
    observable is zero by construction (exact rational recentering).
    Instances are immutable and safe to share across threads.
    """

    states: tuple
    transition: np.ndarray       # row-stochastic (n, n)
    stationary: np.ndarray       # probability row vector (n,)
    observable: np.ndarray       # centered lattice values (n,)
    step: float
    obs_int: np.ndarray          # observable / step, exact integers
    sup_norm: float
    exact_transition: tuple = field(repr=False)   # tuple of tuples of Fraction
    exact_stationary: tuple = field(repr=False)   # tuple of Fraction
    process_id: str = "finite_chain"
    sup_path_bound: float | None = None   # pathwise bound on max|S_k|, when known

    def __post_init__(self):
        object.__setattr__(self, "transition", _readonly(np.asarray(self.transition, float)))
        object.__setattr__(self, "stationary", _readonly(np.asarray(self.stationary, float)))
        object.__setattr__(self, "observable", _readonly(np.asarray(self.observable, float)))
        object.__setattr__(self, "obs_int", _readonly(np.asarray(self.obs_int, np.int64)))

    @property
    def n_states(self) -> int:
        return len(self.states)

    def transition_cumulative(self) -> np.ndarray:
        return np.cumsum(self.transition, axis=1)

    def stationary_cumulative(self) -> np.ndarray:
        return np.cumsum(self.stationary)


def build_finite_chain(transition, observable_raw, step: float, states=None) -> FiniteChain:
    """Validate a transition matrix and assemble the stationary lattice chain.

    The stationary vector is the exact normalized left fixed vector; the
    observable is recentered by its exact stationary mean, refining the
    lattice step by the mean's denominator so centered values stay exact
    integer multiples.

    Raises
    ------
    ValueError
        Non-stochastic rows, observable off the lattice, or a fixed space of
        dimension != 1 ("non-unique stationary law").
    """
    t = np.asarray(transition, dtype=float)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ValueError("transition must be a square matrix")
    if np.any(t < 0):
        raise ValueError("transition entries must be nonnegative")
    row_sums = t.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > ROW_SUM_TOL):
        raise ValueError("transition rows must sum to 1 within 1e-12")
    if step <= 0:
        raise ValueError("step must be positive")
    n = t.shape[0]
    if states is None:
        states = tuple(range(n))
    else:
        states = tuple(states)
        if len(states) != n:
            raise ValueError("states length must match transition size")

    exact_rows = _as_exact_rows(t)
    pi = _exact_stationary(exact_rows)

    obs_int = _snap_to_lattice(observable_raw, float(step))
    mean = sum(p * int(k) for p, k in zip(pi, obs_int))
    if mean == 0:
        new_int, new_step = obs_int, float(step)
    else:
        # Float kernels carry spurious huge denominators (0.9 is not 9/10 in
        # binary); recenter by the closest bounded-denominator rational and
        # insist the residual is far below the 1e-10 centering tolerance.
        snapped = mean.limit_denominator(MAX_LATTICE_REFINEMENT)
        if abs(float(mean - snapped)) > 1e-12:
            raise ValueError(
                "stationary mean denominator too large for exact lattice recentering")
        d = snapped.denominator
        new_int = obs_int * d - snapped.numerator
        new_step = float(step) / d

    observable = new_int.astype(float) * new_step
    sup_norm = float(np.max(np.abs(observable))) if len(observable) else 0.0
    return FiniteChain(
        states=states,
        transition=np.array([[float(x) for x in row] for row in exact_rows]),
        stationary=np.array([float(p) for p in pi]),
        observable=observable,
        step=new_step,
        obs_int=new_int,
        sup_norm=sup_norm,
        exact_transition=tuple(tuple(row) for row in exact_rows),
        exact_stationary=tuple(pi),
    )


def flip_chain(a: float, step: float = 1.0) -> FiniteChain:
    """Two-state chain flipping with probability `a`, observable (+1, -1)."""
    return build_finite_chain(
        [[1.0 - a, a], [a, 1.0 - a]], [1.0 * step, -1.0 * step], step,
        states=("+", "-"))


def normalize_process(chain: FiniteChain) -> FiniteChain:
    """Chain with the observable divided by its sup norm (sup_norm becomes 1)."""
    if chain.sup_norm == 0:
        raise ValueError("cannot normalize a null observable")
    return FiniteChain(
        states=chain.states,
        transition=chain.transition.copy(),
        stationary=chain.stationary.copy(),
        observable=chain.observable / chain.sup_norm,
        step=chain.step / chain.sup_norm,
        obs_int=chain.obs_int.copy(),
        sup_norm=1.0,
        exact_transition=chain.exact_transition,
        exact_stationary=chain.exact_stationary,
        process_id=chain.process_id + "_normalized",
        sup_path_bound=(None if chain.sup_path_bound is None
                        else chain.sup_path_bound / chain.sup_norm),
    )


# ---------------------------------------------------------------------------
# LSV intermittent map
# ---------------------------------------------------------------------------

def lsv_map(gamma: float, x: np.ndarray) -> np.ndarray:
    """One application of the intermittent interval map, vectorized.

    The single source of truth for the map arithmetic: scalar and ensemble
    sampling both route through it, so replicate paths are bit-identical
    whichever API produced them.
    """
    x = np.asarray(x, dtype=float)
    left = x * (1.0 + (2.0 ** gamma) * np.power(x, gamma))
    out = np.where(x < 0.5, left, 2.0 * x - 1.0)
    return np.clip(out, 0.0, 1.0)


def lsv_iterate(gamma: float, x0: float, n: int) -> np.ndarray:
    """Orbit x0, T(x0), ..., T^n(x0) of the intermittent map."""
    if not 0.0 <= x0 <= 1.0:
        raise ValueError("x0 must lie in [0, 1]")
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie strictly inside (0, 1)")
    orbit = np.empty(n + 1)
    orbit[0] = float(x0)
    x = np.array([float(x0)])
    for k in range(1, n + 1):
        x = lsv_map(gamma, x)
        orbit[k] = x[0]
    return orbit


@dataclass(frozen=True)
class LsvObservable:
    """Named bounded observable on [0, 1] with an explicit centering constant."""

    kind: str                 # "identity" or "indicator"
    center: float
    threshold: float = 0.5    # only used by "indicator"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return x - self.center
        if self.kind == "indicator":
            return (x >= self.threshold).astype(float) - self.center
        raise ValueError(f"unknown observable kind {self.kind!r}")

    @property
    def sup_norm(self) -> float:
        if self.kind == "identity":
            return max(abs(self.center), abs(1.0 - self.center))
        return max(abs(self.center), abs(1.0 - self.center))


@dataclass(frozen=True)
class LsvProcess:
    """Forward-orbit process of the intermittent map with a bounded observable.

    Stationary sampling is approximate: the start point is uniform on [0, 1]
    and `burn_in` iterations are discarded before recording.
    """

    gamma: float
    observable: LsvObservable
    burn_in: int = 10_000
    process_id: str = "lsv"

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie strictly inside (0, 1)")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")

    @property
    def sup_norm(self) -> float:
        return self.observable.sup_norm


def lsv_reference_mean(gamma: float, total_iterations: int = 10**7, seed: int = 0,
                       orbits: int = 100) -> float:
    """Long-run average of x under the invariant law, by ensemble Birkhoff sums.

    Splits the iteration budget over `orbits` parallel orbits started uniformly
    (after a shared burn-in of one tenth of the per-orbit length).
    """
    per_orbit = max(1, total_iterations // orbits)
    burn = per_orbit // 10
    gen = path_stream(seed, per_orbit, 0)
    x = gen.random(orbits)
    for _ in range(burn):
        x = lsv_map(gamma, x)
    acc = 0.0
    for _ in range(per_orbit):
        x = lsv_map(gamma, x)
        acc += float(x.sum())
    return acc / (per_orbit * orbits)


# ---------------------------------------------------------------------------
# Sample paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SamplePath:
    """Realized path X_1..X_n with exact partial sums.

    ``partial_sums[0] == 0`` and ``partial_sums[k] - partial_sums[k-1] ==
    values[k-1]``; for lattice chains both are integer multiples of ``step``
    (``values_int`` / ``sums_int`` carry the exact integers).
    """

    values: np.ndarray
    partial_sums: np.ndarray
    seed: int
    process_id: str
    replicate: int = 0
    step: float | None = None
    values_int: np.ndarray | None = None
    sums_int: np.ndarray | None = None
    states: np.ndarray | None = None   # chain states xi_0..xi_n (lattice chains)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def running_max(self) -> np.ndarray:
        """One-sided running maximum max_{j<=k} S_j, k = 0..n."""
        return np.maximum.accumulate(self.partial_sums)

    def max_partial_sum(self) -> float:
        return float(np.max(self.partial_sums))

    def max_abs_partial_sum(self) -> float:
        return float(np.max(np.abs(self.partial_sums)))


def _chain_states_from_uniforms(chain: FiniteChain, u: np.ndarray) -> np.ndarray:
    """Map uniforms (r, n+1) to state paths (r, n+1); u[:, 0] draws xi_0."""
    cum_pi = chain.stationary_cumulative()
    cum_rows = chain.transition_cumulative()
    r, cols = u.shape
    states = np.empty((r, cols), dtype=np.int64)
    states[:, 0] = np.searchsorted(cum_pi, u[:, 0], side="right")
    np.clip(states[:, 0], 0, chain.n_states - 1, out=states[:, 0])
    for j in range(1, cols):
        rows = cum_rows[states[:, j - 1]]
        nxt = (u[:, j][:, None] > rows).sum(axis=1)
        states[:, j] = np.minimum(nxt, chain.n_states - 1)
    return states


def sample_chain_paths(chain: FiniteChain, n: int, seed: int,
                       replicates: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """State paths (r, n+1) and integer observable values (r, n) for the given
    replicate indices, each driven by its own path substream."""
    if n < 1:
        raise ValueError("n must be >= 1")
    u = np.stack([path_stream(seed, n, rep).random(n + 1) for rep in replicates])
    states = _chain_states_from_uniforms(chain, u)
    return states, chain.obs_int[states[:, 1:]]


def sample_path(process, n: int, seed: int, replicate: int = 0) -> SamplePath:
    """One path of length n; bit-identical across calls with equal arguments."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(process, FiniteChain):
        states, vals_int = sample_chain_paths(process, n, seed, [replicate])
        vals_int = vals_int[0]
        sums_int = np.concatenate(([0], np.cumsum(vals_int)))
        return SamplePath(
            values=vals_int.astype(float) * process.step,
            partial_sums=sums_int.astype(float) * process.step,
            seed=seed, replicate=replicate, process_id=process.process_id,
            step=process.step, values_int=vals_int, sums_int=sums_int,
            states=states[0],
        )
    if isinstance(process, LsvProcess):
        gen = path_stream(seed, n, replicate)
        x = np.array([float(gen.random())])
        orbit = np.empty(n)
        for _ in range(process.burn_in):
            x = lsv_map(process.gamma, x)
        for k in range(n):
            x = lsv_map(process.gamma, x)
            orbit[k] = x[0]
        values = process.observable(orbit)
        return SamplePath(
            values=values,
            partial_sums=np.concatenate(([0.0], np.cumsum(values))),
            seed=seed, replicate=replicate, process_id=process.process_id,
        )
    raise TypeError(f"unsupported process type {type(process).__name__}")


def sample_lsv_ensemble(process: LsvProcess, n: int, seed: int,
                        replicates: Sequence[int]) -> np.ndarray:
    """Observable values (r, n) for LSV orbits, lockstep across replicates."""
    reps = list(replicates)
    gens = [path_stream(seed, n, rep) for rep in reps]
    x = np.array([float(g.random()) for g in gens])
    for _ in range(process.burn_in):
        x = lsv_map(process.gamma, x)
    out = np.empty((len(reps), n))
    for k in range(n):
        x = lsv_map(process.gamma, x)
        out[:, k] = x
    return process.observable(out)


# ---------------------------------------------------------------------------
# Derived processes: symmetrized pair and telescoping (degenerate) observable
# ---------------------------------------------------------------------------

def symmetrize(chain: FiniteChain) -> FiniteChain:
    """Chain of Z_i = X_i - X'_i with (X') an independent copy of (X).

    Built exactly as the product chain on state pairs with observable
    f(s) - f(s'); the product stationary law is recomputed by the exact
    solver (and equals the product of the marginals).
    """
    if not isinstance(chain, FiniteChain):
        raise TypeError("symmetrize is implemented for exact finite chains only")
    n = chain.n_states
    pairs = [(i, j) for i in range(n) for j in range(n)]
    t = np.zeros((n * n, n * n))
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            t[a, b] = chain.transition[i, k] * chain.transition[j, l]
    obs = [chain.observable[i] - chain.observable[j] for (i, j) in pairs]
    labels = tuple((chain.states[i], chain.states[j]) for (i, j) in pairs)
    out = build_finite_chain(t, obs, chain.step, states=labels)
    return FiniteChain(
        states=out.states, transition=out.transition, stationary=out.stationary,
        observable=out.observable, step=out.step, obs_int=out.obs_int,
        sup_norm=out.sup_norm, exact_transition=out.exact_transition,
        exact_stationary=out.exact_stationary,
        process_id=chain.process_id + "_symmetrized",
    )


def make_coboundary(chain: FiniteChain, g_values) -> FiniteChain:
    """Degenerate process whose partial sums telescope pathwise.

    Returns the pair-state chain eta_i = (xi_i, xi_{i+1}) with observable
    f(s, t) = g(s) - g(t), so that S_n = g(xi_1) - g(xi_{n+1}) is bounded by
    2 max|g| and the covariance series vanishes.  g must live on the chain's
    lattice.
    """
    g_int = _snap_to_lattice(g_values, chain.step)
    if len(g_int) != chain.n_states:
        raise ValueError("g_values must assign one value per state")
    pairs = [(i, j) for i in range(chain.n_states) for j in range(chain.n_states)
             if chain.exact_stationary[i] > 0 and chain.exact_transition[i][j] > 0]
    m = len(pairs)
    t = np.zeros((m, m))
    for a, (_, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            if k == j:
                t[a, b] = chain.transition[j, l]
    obs = [(g_int[i] - g_int[j]) * chain.step for (i, j) in pairs]
    labels = tuple((chain.states[i], chain.states[j]) for (i, j) in pairs)
    out = build_finite_chain(t, obs, chain.step, states=labels)
    support = [i for i in range(chain.n_states) if chain.exact_stationary[i] > 0]
    g_spread = float((max(g_int[i] for i in support)
                      - min(g_int[i] for i in support)) * chain.step)
    return FiniteChain(
        states=out.states, transition=out.transition, stationary=out.stationary,
        observable=out.observable, step=out.step, obs_int=out.obs_int,
        sup_norm=out.sup_norm, exact_transition=out.exact_transition,
        exact_stationary=out.exact_stationary,
        process_id=chain.process_id + "_coboundary",
        sup_path_bound=g_spread,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def process_to_config(process) -> dict:
    if isinstance(process, FiniteChain):
        return {
            "type": "finite_chain",
            "states": [str(s) for s in process.states],
            "transition": [[float(x) for x in row] for row in process.transition],
            "observable": [float(v) for v in process.observable],
            "step": process.step,
        }
    if isinstance(process, LsvProcess):
        return {
            "type": "lsv",
            "gamma": process.gamma,
            "burn_in": process.burn_in,
            "observable": {
                "kind": process.observable.kind,
                "center": process.observable.center,
                "threshold": process.observable.threshold,
            },
        }
    raise TypeError(f"unsupported process type {type(process).__name__}")


def process_from_config(doc: dict):
    kind = doc.get("type")
    if kind == "finite_chain":
        return build_finite_chain(doc["transition"], doc["observable"],
                                  float(doc["step"]), states=doc.get("states"))
    if kind == "lsv":
        obs = doc["observable"]
        return LsvProcess(
            gamma=float(doc["gamma"]),
            observable=LsvObservable(kind=obs["kind"], center=float(obs["center"]),
                                     threshold=float(obs.get("threshold", 0.5))),
            burn_in=int(doc.get("burn_in", 10_000)),
        )
    raise ValueError(f"unknown process type {kind!r}")


def save_process(process, path) -> None:
    with open(path, "w") as fh:
        json.dump(process_to_config(process), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_process(path):
    with open(path) as fh:
        return process_from_config(json.load(fh))


def path_to_csv(path: SamplePath, file) -> None:
    """Write (index, value, partial_sum) rows; index k covers 1..n."""
    own = isinstance(file, (str, bytes))
    fh = open(file, "w") if own else file
    try:
        fh.write("index,value,partial_sum\n")
        for k in range(1, path.n + 1):
            fh.write(f"{k},{float(path.values[k - 1])!r},"
                     f"{float(path.partial_sums[k])!r}\n")
    finally:
        if own:
            fh.close()
