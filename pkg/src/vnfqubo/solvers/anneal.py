"""Single-flip Metropolis simulated annealing over a QUBO."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numba as nb
import numpy as np
import scipy.sparse as sp

from ..qubo import QuboModel, energy


@dataclass(frozen=True)
class AnnealParams:
    """Annealing budget and schedule.

    ``beta_start``/``beta_end`` default to ``0.1 / scale`` and ``10 / scale``
    where ``scale`` is the mean absolute nonzero coefficient of Q.
    """

    reads: int = 10
    sweeps: int = 1000
    beta_start: Optional[float] = None
    beta_end: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.reads < 1:
            raise ValueError("reads must be >= 1")
        if self.sweeps < 0:
            raise ValueError("sweeps must be >= 0")
        if self.beta_start is not None and not self.beta_start > 0:
            raise ValueError("beta_start must be positive")
        if (
            self.beta_start is not None
            and self.beta_end is not None
            and self.beta_end < self.beta_start
        ):
            raise ValueError("beta_end must be >= beta_start")

    def betas(self, model: QuboModel) -> tuple:
        data = np.abs(model.Q.data)
        scale = float(data.mean()) if len(data) else 1.0
        lo = self.beta_start if self.beta_start is not None else 0.1 / scale
        hi = self.beta_end if self.beta_end is not None else 10.0 / scale
        if hi < lo:
            raise ValueError("beta_end must be >= beta_start")
        return lo, hi


@dataclass
class SampleSet:
    """Samples sorted by energy (ties keep read order)."""

    samples: np.ndarray
    energies: np.ndarray
    timing: float

    def __len__(self):
        return len(self.energies)

    @property
    def first(self):
        return self.samples[0], float(self.energies[0])


def read_seeds(seed: int, reads: int) -> np.ndarray:
    """One 64-bit stream seed per read, derived from (seed, read index)."""
    return np.array(
        [np.random.SeedSequence([seed, r]).generate_state(1, np.uint64)[0] for r in range(reads)],
        dtype=np.uint64,
    )


def symmetric_csr(model: QuboModel):
    """Split Q into linear terms and a symmetric neighbour list for local fields."""
    Q = model.Q.tocoo()
    diag = Q.row == Q.col
    h = np.zeros(model.n_vars)
    np.add.at(h, Q.row[diag], Q.data[diag])
    r, c, v = Q.row[~diag], Q.col[~diag], Q.data[~diag]
    J = sp.csr_matrix(
        (np.concatenate([v, v]), (np.concatenate([r, c]), np.concatenate([c, r]))),
        shape=(model.n_vars, model.n_vars),
    )
    J.sort_indices()
    return h, J.indptr.astype(np.int64), J.indices.astype(np.int64), J.data.astype(np.float64)


@nb.njit(cache=True)
def _next(state):
    # xorshift64*
    x = state[0]
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    state[0] = x
    return x * np.uint64(2685821657736338717)


@nb.njit(cache=True)
def _uniform(state):
    return (_next(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@nb.njit(cache=True)
def _anneal(h, indptr, indices, data, betas, seeds, out):
    n = h.shape[0]
    state = np.empty(1, dtype=np.uint64)
    field = np.empty(n)
    for r in range(seeds.shape[0]):
        # splitmix64 scramble so neighbouring seeds decorrelate; never zero
        z = seeds[r] + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
        if z == np.uint64(0):
            z = np.uint64(1)
        state[0] = z
        s = out[r]
        for i in range(n):
            s[i] = 1 if (_next(state) >> np.uint64(63)) == np.uint64(1) else 0
        for i in range(n):
            f = h[i]
            for k in range(indptr[i], indptr[i + 1]):
                if s[indices[k]]:
                    f += data[k]
            field[i] = f
        for beta in betas:
            for i in range(n):
                delta = field[i] if s[i] == 0 else -field[i]
                if delta <= 0.0 or _uniform(state) < np.exp(-beta * delta):
                    d = 1.0 if s[i] == 0 else -1.0
                    s[i] = 1 - s[i]
                    for k in range(indptr[i], indptr[i + 1]):
                        field[indices[k]] += d * data[k]


def flip_delta(model: QuboModel, bits, i: int) -> float:
    """Energy change from flipping bit ``i``, read from its row and column of Q only."""
    b = np.asarray(bits, dtype=float)
    row = model.Q.getrow(i)
    col = model.Q.getcol(i)
    diag = model.Q[i, i]
    field = diag + row.dot(b)[0] + col.T.dot(b)[0] - 2.0 * diag * b[i]
    return float(field if b[i] == 0 else -field)


def simulated_annealing(model: QuboModel, params: Optional[AnnealParams] = None) -> SampleSet:
    """Sample ``params.reads`` low-energy states; energies are recomputed from scratch."""
    params = params or AnnealParams()
    lo, hi = params.betas(model)
    if params.sweeps == 0:
        betas = np.zeros(0)
    elif params.sweeps == 1:
        betas = np.array([hi])
    else:
        betas = np.geomspace(lo, hi, params.sweeps)
    h, indptr, indices, data = symmetric_csr(model)
    out = np.zeros((params.reads, model.n_vars), dtype=np.int8)
    t0 = time.perf_counter()
    if model.n_vars:
        _anneal(h, indptr, indices, data, betas, read_seeds(params.seed, params.reads), out)
    elapsed = time.perf_counter() - t0
    e = np.array([energy(model, s) for s in out])
    order = np.argsort(e, kind="stable")
    return SampleSet(out[order], e[order], elapsed)
