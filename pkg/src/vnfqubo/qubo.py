"""Compile an instance and horizon into an upper-triangular QUBO.

Variables exist only for capable (chain, step, VM) triples. Blocks are laid
out as all ``x``, then ``y``, ``z``, ``p``, ``r1``, ``r2``, ``rseq``, each in
lexicographic (i, j, m, t) order.

Every constraint becomes a penalty term that is zero exactly when the
constraint holds and at least its coefficient otherwise:

* equalities: ``P * (lhs - rhs)**2``
* ``a + b + ... <= 1``: ``P * sum of pairwise products``
* ``lhs <= rhs`` with ``rhs - lhs`` in {0, 1}: ``P * (lhs - rhs + r)**2`` with one
  binary slack ``r``

One slack bit is enough for each inequality: ``x - y``, ``y - window(z)`` and
``finished - z_next`` are at most 1 whenever the one-start/one-finish
equalities hold, and any assignment breaking those is already penalised.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping, Optional

import numpy as np
import scipy.sparse as sp

from .instance import Instance, from_dict, to_dict
from .schedule import Schedule, SlackAssignment

FAMILIES = ("x", "y", "z", "p", "r1", "r2", "rseq")

PENALTIES = (
    "assign_one",
    "start_iff_assigned",
    "vm_capacity",
    "busy_implies_assigned",
    "busy_duration",
    "start_finish_exclusive",
    "busy_transition",
    "run_length",
    "precedence",
    "single_start",
    "single_finish",
)


class QuboFormatError(ValueError):
    pass


class VariableMap:
    """Bijection between (family, 1-based index tuple) and flat positions."""

    def __init__(self, instance: Instance, horizon: int):
        self.horizon = horizon
        capable = instance.capable_mask
        link = np.zeros_like(capable)
        for chain in instance.chains:
            n = len(chain)
            link[chain.id - 1, : n - 1] = capable[chain.id - 1, 1:n]
        timed = np.ones(horizon, dtype=bool)
        masks = {
            "x": capable,
            "y": capable[..., None] & timed,
            "z": capable[..., None] & timed,
            "p": capable[..., None] & timed,
            "r1": capable[..., None] & timed,
            "r2": capable[..., None] & timed,
            "rseq": link[..., None] & timed,
        }
        self.index = {}
        self.descriptors = []
        start = 0
        self.blocks = {}
        for fam in FAMILIES:
            mask = masks[fam]
            pos = np.argwhere(mask)
            idx = np.full(mask.shape, -1, dtype=np.int64)
            idx[tuple(pos.T)] = np.arange(start, start + len(pos))
            self.index[fam] = idx
            self.descriptors.extend((fam, tuple(int(v) + 1 for v in row)) for row in pos)
            self.blocks[fam] = (start, start + len(pos))
            start += len(pos)
        self.n_vars = start

    @property
    def sizes(self) -> dict:
        return {fam: b - a for fam, (a, b) in self.blocks.items()}

    def position(self, family: str, *index: int) -> int:
        pos = int(self.index[family][tuple(k - 1 for k in index)])
        if pos < 0:
            raise KeyError(f"no variable {family}{index}")
        return pos

    def __len__(self):
        return self.n_vars


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty coefficients.

    Args:
        base: coefficient for every penalty family. None means
            ``multiplier * objective_upper_bound``.
        multiplier: scale applied to the objective bound when ``base`` is None.
        overrides: per-family coefficients keyed by names in ``PENALTIES``.
        printed_busy_duration: use ``(sum_t y - T)**2`` for the busy-duration
            penalty instead of ``(sum_t y - T * x)**2``. The former also
            charges every unchosen VM and exists only for comparison.
    """

    base: Optional[float] = None
    multiplier: float = 100.0
    overrides: Mapping[str, float] = field(default_factory=dict)
    printed_busy_duration: bool = False

    def __post_init__(self):
        unknown = set(self.overrides) - set(PENALTIES)
        if unknown:
            raise ValueError(f"unknown penalty families: {sorted(unknown)}")
        if self.base is not None and not self.base > 0:
            raise ValueError("penalty base must be positive")
        if not self.multiplier > 0:
            raise ValueError("penalty multiplier must be positive")
        if any(not v > 0 for v in self.overrides.values()):
            raise ValueError("penalty overrides must be positive")

    def resolve(self, instance: Instance, horizon: int) -> "PenaltyConfig":
        if self.base is not None:
            return self
        bound = objective_upper_bound(instance, horizon)
        return replace(self, base=self.multiplier * bound if bound > 0 else 1.0)

    def coefficient(self, family: str) -> float:
        if self.base is None:
            raise ValueError("unresolved penalty config")
        return float(self.overrides.get(family, self.base))

    @property
    def minimum(self) -> float:
        return min(self.coefficient(f) for f in PENALTIES)


def objective_upper_bound(instance: Instance, horizon: int) -> float:
    """Largest total delay representable: every chain finishing at the last slot."""
    return instance.n_chains * (horizon - 1) * instance.slot_length


class _Accumulator:
    """Collects COO triplets for one term family."""

    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []
        self.offset = 0.0

    def linear(self, idx, coef):
        idx = np.asarray(idx, dtype=np.int64)
        self.rows.append(idx)
        self.cols.append(idx)
        self.vals.append(np.broadcast_to(np.asarray(coef, dtype=float), idx.shape).copy())

    def pairs(self, a, b, coef):
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        if np.any(a == b):
            raise AssertionError("pair term on a single variable")
        self.rows.append(np.minimum(a, b))
        self.cols.append(np.maximum(a, b))
        self.vals.append(np.broadcast_to(np.asarray(coef, dtype=float), a.shape).copy())

    def square(self, idx, coef, const, weight):
        """Add ``weight * (sum(coef * v[idx]) + const)**2`` using ``v**2 == v``."""
        idx = np.asarray(idx, dtype=np.int64)
        coef = np.asarray(coef, dtype=float)
        if len(np.unique(idx)) != len(idx):
            raise AssertionError("repeated variable inside a squared expression")
        self.linear(idx, weight * (coef * coef + 2.0 * const * coef))
        a, b = np.triu_indices(len(idx), 1)
        if len(a):
            self.pairs(idx[a], idx[b], 2.0 * weight * coef[a] * coef[b])
        self.offset += weight * const * const

    def matrix(self, n):
        if not self.rows:
            return sp.csr_matrix((n, n))
        rows = np.concatenate(self.rows)
        cols = np.concatenate(self.cols)
        if np.any(rows > cols):
            raise AssertionError("lower-triangular entry")
        m = sp.coo_matrix((np.concatenate(self.vals), (rows, cols)), shape=(n, n)).tocsr()
        m.sum_duplicates()
        m.eliminate_zeros()
        return m


@dataclass(frozen=True, eq=False)
class QuboModel:
    """``energy(b) = b @ Q @ b + offset`` with ``Q`` upper-triangular (linear terms on the diagonal)."""

    instance: Instance
    horizon: int
    config: PenaltyConfig
    varmap: VariableMap
    Q: sp.csr_matrix
    offset: float
    parts: dict

    @property
    def n_vars(self) -> int:
        return self.Q.shape[0]

    @cached_property
    def is_integral(self) -> bool:
        return bool(np.all(self.Q.data == np.round(self.Q.data))) and float(self.offset).is_integer()

    @cached_property
    def _q_int(self):
        return self.Q.astype(np.int64)

    def energy(self, bits) -> float:
        return energy(self, bits)


def build_qubo(instance: Instance, horizon: int, config: Optional[PenaltyConfig] = None) -> QuboModel:
    """Materialise the objective and every penalty family as one QUBO."""
    if horizon < 2:
        raise ValueError(f"horizon {horizon} < 2 leaves no room to start and finish a step")
    config = (config or PenaltyConfig()).resolve(instance, horizon)
    vm = VariableMap(instance, horizon)
    T = instance.slot_table
    capable = T > 0
    H = horizon
    X, Y, Z, Pv = vm.index["x"], vm.index["y"], vm.index["z"], vm.index["p"]
    R1, R2, RS = vm.index["r1"], vm.index["r2"], vm.index["rseq"]
    acc = {name: _Accumulator() for name in ("objective",) + PENALTIES}
    w = config.coefficient

    # objective: finish slot of each chain's last step
    cost = (np.arange(1, H + 1) - 1) * instance.slot_length
    for chain in instance.chains:
        a, b = chain.id - 1, len(chain) - 1
        for c in np.nonzero(capable[a, b])[0]:
            acc["objective"].linear(Pv[a, b, c], cost)

    for chain in instance.chains:
        a = chain.id - 1
        for b in range(len(chain)):
            ms = np.nonzero(capable[a, b])[0]
            xs = X[a, b, ms]
            acc["assign_one"].square(xs, np.ones(len(xs)), -1.0, w("assign_one"))
            zs = Z[a, b, ms].ravel()
            ps = Pv[a, b, ms].ravel()
            acc["single_start"].square(zs, np.ones(len(zs)), -1.0, w("single_start"))
            acc["single_finish"].square(ps, np.ones(len(ps)), -1.0, w("single_finish"))
            for c in ms:
                n = int(T[a, b, c])
                ones = np.ones(H)
                acc["start_iff_assigned"].square(
                    np.append(Z[a, b, c], X[a, b, c]), np.append(ones, -1.0), 0.0, w("start_iff_assigned")
                )
                if config.printed_busy_duration:
                    acc["busy_duration"].square(Y[a, b, c], ones, -float(n), w("busy_duration"))
                else:
                    acc["busy_duration"].square(
                        np.append(Y[a, b, c], X[a, b, c]), np.append(ones, -float(n)), 0.0, w("busy_duration")
                    )
                acc["start_finish_exclusive"].pairs(Z[a, b, c], Pv[a, b, c], w("start_finish_exclusive"))
                for t in range(H):
                    acc["busy_implies_assigned"].square(
                        [Y[a, b, c, t], X[a, b, c], R1[a, b, c, t]], [1.0, -1.0, 1.0], 0.0,
                        w("busy_implies_assigned"),
                    )
                    # y[t-1] - y[t] + z[t] - p[t]; y before slot 1 is 0
                    idx = [Y[a, b, c, t], Z[a, b, c, t], Pv[a, b, c, t]]
                    co = [-1.0, 1.0, -1.0]
                    if t > 0:
                        idx.append(Y[a, b, c, t - 1])
                        co.append(1.0)
                    acc["busy_transition"].square(idx, co, 0.0, w("busy_transition"))
                    window = Z[a, b, c, max(0, t - n + 1): t + 1]
                    acc["run_length"].square(
                        np.concatenate([window, [Y[a, b, c, t], R2[a, b, c, t]]]),
                        np.concatenate([np.ones(len(window)), [-1.0, 1.0]]),
                        0.0,
                        w("run_length"),
                    )
            if b + 1 < len(chain):
                done = Pv[a, b, ms]  # (|V|, H)
                for c2 in np.nonzero(capable[a, b + 1])[0]:
                    for t in range(H):
                        before = done[:, : t + 1].ravel()
                        acc["precedence"].square(
                            np.concatenate([[Z[a, b + 1, c2, t], RS[a, b, c2, t]], before]),
                            np.concatenate([[1.0, 1.0], -np.ones(len(before))]),
                            0.0,
                            w("precedence"),
                        )

    for c in range(instance.n_vms):
        users = np.argwhere(capable[:, :, c])
        if len(users) < 2:
            continue
        a, b = np.triu_indices(len(users), 1)
        ua, ub = users[a], users[b]
        for t in range(H):
            acc["vm_capacity"].pairs(Y[ua[:, 0], ua[:, 1], c, t], Y[ub[:, 0], ub[:, 1], c, t], w("vm_capacity"))

    n = vm.n_vars
    parts = {name: (a.matrix(n), a.offset) for name, a in acc.items()}
    Q = sp.csr_matrix((n, n))
    offset = 0.0
    for m, off in parts.values():
        Q = Q + m
        offset += off
    Q = sp.csr_matrix(Q)
    Q.sum_duplicates()
    Q.eliminate_zeros()
    Q.sort_indices()
    if sp.tril(Q, k=-1).nnz:
        raise AssertionError("QUBO matrix is not upper-triangular")
    return QuboModel(instance, horizon, config, vm, Q, float(offset), parts)


def _as_bits(model: QuboModel, bits) -> np.ndarray:
    b = np.asarray(bits)
    if b.shape[-1] != model.n_vars:
        raise ValueError(f"expected {model.n_vars} bits, got {b.shape[-1]}")
    return b


def energy(model: QuboModel, bits) -> float:
    """``bits @ Q @ bits + offset``; exact in integers when every coefficient is integral."""
    b = _as_bits(model, bits)
    if b.ndim != 1:
        raise ValueError("energy takes one bit vector; use energies for a batch")
    if model.is_integral:
        bi = b.astype(np.int64)
        return float(int(bi @ (model._q_int @ bi)) + int(model.offset))
    bf = b.astype(float)
    return float(bf @ (model.Q @ bf) + model.offset)


def energies(model: QuboModel, bits) -> np.ndarray:
    b = _as_bits(model, np.atleast_2d(bits)).astype(float)
    return np.einsum("ij,ij->i", b, (model.Q @ b.T).T) + model.offset


def part_energies(model: QuboModel, bits) -> dict:
    """Energy contribution of the objective and each penalty family."""
    b = _as_bits(model, bits).astype(float)
    return {name: float(b @ (m @ b) + off) for name, (m, off) in model.parts.items()}


def encode(instance: Instance, schedule: Schedule, slacks: SlackAssignment) -> np.ndarray:
    vm = VariableMap(instance, schedule.horizon)
    bits = np.zeros(vm.n_vars, dtype=np.int8)
    values = {"x": schedule.x, "y": schedule.y, "z": schedule.z, "p": schedule.p,
              "r1": slacks.r1, "r2": slacks.r2, "rseq": slacks.rseq}
    for fam in FAMILIES:
        idx = vm.index[fam]
        arr = np.asarray(values[fam])
        if arr.shape != idx.shape:
            raise ValueError(f"{fam} has shape {arr.shape}, expected {idx.shape}")
        present = idx >= 0
        if np.any(arr[~present]):
            raise ValueError(f"{fam} set at an index with no variable")
        bits[idx[present]] = arr[present]
    return bits


def decode(model: QuboModel, bits) -> tuple:
    """Any bit vector maps to tensors; feasibility is judged separately."""
    b = _as_bits(model, bits)
    if b.ndim != 1:
        raise ValueError("decode takes one bit vector")
    out = {}
    for fam in FAMILIES:
        idx = model.varmap.index[fam]
        arr = np.zeros(idx.shape, dtype=np.int8)
        present = idx >= 0
        arr[present] = b[idx[present]]
        out[fam] = arr
    schedule = Schedule(model.horizon, out["x"], out["y"], out["z"], out["p"])
    return schedule, SlackAssignment(out["r1"], out["r2"], out["rseq"])


def _fmt(v: float) -> str:
    return repr(float(v))


def export_qubo(model: QuboModel) -> str:
    """Coordinate text: comment metadata, ``p qubo`` header, diagonal then off-diagonal entries."""
    coo = model.Q.tocoo()
    order = np.lexsort((coo.col, coo.row))
    r, c, v = coo.row[order], coo.col[order], coo.data[order]
    diag = r == c
    cfg = model.config
    lines = [
        "c vnfqubo model",
        f"c offset {_fmt(model.offset)}",
        f"c horizon {model.horizon}",
        f"c penalty {_fmt(cfg.base)}",
        f"c multiplier {_fmt(cfg.multiplier)}",
        f"c overrides {json.dumps(dict(sorted(cfg.overrides.items())))}",
        f"c busy_duration {'printed' if cfg.printed_busy_duration else 'faithful'}",
        f"c instance {json.dumps(to_dict(model.instance), separators=(',', ':'))}",
        f"p qubo 0 {model.n_vars} {int(diag.sum())} {int((~diag).sum())}",
    ]
    lines += [f"{i} {i} {_fmt(x)}" for i, x in zip(r[diag], v[diag])]
    lines += [f"{i} {j} {_fmt(x)}" for i, j, x in zip(r[~diag], c[~diag], v[~diag])]
    return "\n".join(lines) + "\n"


def parse_qubo(text: str) -> tuple:
    """Read a coordinate file; returns ``(Q, offset, metadata)``."""
    meta: dict = {}
    header = None
    rows, cols, vals = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("c"):
            parts = line.split(None, 2)
            if len(parts) == 3:
                meta[parts[1]] = parts[2]
            continue
        if line.startswith("p"):
            f = line.split()
            if len(f) != 6 or f[1] != "qubo":
                raise QuboFormatError(f"line {lineno}: bad header {line!r}")
            header = tuple(int(v) for v in f[2:])
            continue
        if header is None:
            raise QuboFormatError(f"line {lineno}: entry before header")
        f = line.split()
        if len(f) != 3:
            raise QuboFormatError(f"line {lineno}: expected '<i> <j> <coeff>'")
        i, j, x = int(f[0]), int(f[1]), float(f[2])
        if not 0 <= i <= j < header[1]:
            raise QuboFormatError(f"line {lineno}: index ({i}, {j}) out of range or below diagonal")
        rows.append(i)
        cols.append(j)
        vals.append(x)
    if header is None:
        raise QuboFormatError("missing 'p qubo' header")
    _, n, ndiag, noff = header
    nd = sum(1 for i, j in zip(rows, cols) if i == j)
    if nd != ndiag or len(rows) - nd != noff:
        raise QuboFormatError("entry counts do not match header")
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    offset = float(meta.get("offset", 0.0))
    return Q, offset, meta


def model_from_export(text: str) -> QuboModel:
    """Rebuild the model an exported file came from and check the matrices agree."""
    Q, offset, meta = parse_qubo(text)
    try:
        instance = from_dict(json.loads(meta["instance"]))
        cfg = PenaltyConfig(
            base=float(meta["penalty"]),
            multiplier=float(meta.get("multiplier", 100.0)),
            overrides=json.loads(meta.get("overrides", "{}")),
            printed_busy_duration=meta.get("busy_duration") == "printed",
        )
        model = build_qubo(instance, int(meta["horizon"]), cfg)
    except KeyError as exc:
        raise QuboFormatError(f"file lacks metadata line 'c {exc.args[0]}'") from exc
    if model.Q.shape != Q.shape or (model.Q != Q).nnz or model.offset != offset:
        raise QuboFormatError("file contents differ from the model its metadata describes")
    return model


def export_result(bits) -> str:
    return " ".join(str(int(v)) for v in np.asarray(bits)) + "\n"


def import_result(model: QuboModel, text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("c")]
    if len(lines) != 1:
        raise QuboFormatError(f"expected one line of bits, found {len(lines)}")
    tokens = lines[0].split()
    if any(t not in ("0", "1") for t in tokens):
        raise QuboFormatError("result values must be 0 or 1")
    if len(tokens) != model.n_vars:
        raise QuboFormatError(f"expected {model.n_vars} values, got {len(tokens)}")
    return np.array([int(t) for t in tokens], dtype=np.int8)


__all__ = [
    "FAMILIES", "PENALTIES", "PenaltyConfig", "QuboFormatError", "QuboModel", "VariableMap",
    "build_qubo", "decode", "encode", "energies", "energy",
    "export_qubo", "export_result", "import_result", "model_from_export", "objective_upper_bound",
    "parse_qubo", "part_energies",
]
