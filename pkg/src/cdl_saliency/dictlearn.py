"""Online discriminant dictionary learning with a contrast-weighted atom update.

Each trainer keeps running sums ``B = sum a a^T``, ``C = sum x a^T`` and
``G = sum w w^T`` over the samples drawn so far. Atoms are refreshed in
index order, every atom seeing the already-updated atoms before it:

    d_j <- d_j - (D b_j - c_j) / B[j, j] - sign * 2 * lambda2 * sigma * (G / t) d_j_old

followed by projection onto the unit l2 ball. ``sign`` is -1 for the
salient dictionary (contrast patterns encouraged) and +1 for the
non-salient one (discouraged).
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .coding import DEFAULT_MAX_ITER, DEFAULT_TOL, lasso_solve, lasso_solve_many
from .errors import DimensionError, FormatError

log = logging.getLogger(__name__)

SALIENT = "salient"
NON_SALIENT = "non-salient"
_KIND_CODES = {SALIENT: 0, NON_SALIENT: 1}

UNUSED_ATOM = 1e-12
_BLOCK = 64


@dataclass
class Dictionary:
    atoms: np.ndarray
    kind: str = SALIENT

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=np.float64)
        if self.atoms.ndim != 2:
            raise DimensionError(f"atoms must be n x k, got {self.atoms.shape}")
        if self.kind not in _KIND_CODES:
            raise ValueError(f"kind must be {SALIENT!r} or {NON_SALIENT!r}")

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def k(self) -> int:
        return self.atoms.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Dictionary):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.atoms, other.atoms)


@dataclass
class TrainerState:
    D: np.ndarray
    sign: int = 1
    lambda1: float = 0.075
    lambda2: float = 0.05
    sigma: float = 0.02
    kind: str = NON_SALIENT
    t: int = 0
    B: np.ndarray = field(default=None)
    C: np.ndarray = field(default=None)
    G: np.ndarray = field(default=None)

    def __post_init__(self):
        self.D = np.array(self.D, dtype=np.float64, order="F")
        n, k = self.D.shape
        if self.B is None:
            self.B = np.zeros((k, k))
        if self.C is None:
            self.C = np.zeros((n, k), order="F")
        if self.G is None:
            self.G = np.zeros((n, n))
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def dictionary(self) -> Dictionary:
        return Dictionary(self.D.copy(), self.kind)


def init_dictionary(X, k, seed=0, kind=SALIENT) -> Dictionary:
    """Fill ``k`` atoms with training columns drawn uniformly with replacement.

    Columns are scaled to unit norm; all-zero draws are replaced by unit
    basis vectors e_1, e_2, ... in turn.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] == 0:
        raise DimensionError("need at least one training patch")
    if k < 1:
        raise ValueError("k must be at least 1")
    rng = np.random.default_rng(seed)
    return Dictionary(_init_atoms(X, k, rng), kind)


def _init_atoms(X, k, rng):
    n, m = X.shape
    atoms = X[:, rng.integers(0, m, size=k)].copy()
    norms = np.linalg.norm(atoms, axis=0)
    basis = 0
    for j in range(k):
        if norms[j] > 0:
            atoms[:, j] /= norms[j]
        else:
            atoms[:, j] = 0.0
            atoms[basis % n, j] = 1.0
            basis += 1
    return atoms


def update_accumulators(state: TrainerState, x, alpha, w) -> TrainerState:
    """Add one sample's rank-one terms to B, C and G and advance ``t``."""
    x = np.asarray(x, dtype=np.float64)
    alpha = np.asarray(getattr(alpha, "alpha", alpha), dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, k = state.D.shape
    if x.shape != (n,) or alpha.shape != (k,) or w.shape != (n,):
        raise DimensionError(
            f"expected x, w of length {n} and alpha of length {k}; "
            f"got {x.shape}, {w.shape}, {alpha.shape}")
    nz = np.flatnonzero(alpha)
    if nz.size:
        a = alpha[nz]
        state.B[np.ix_(nz, nz)] += np.outer(a, a)
        state.C[:, nz] += np.outer(x, a)
    state.G += np.outer(w, w)
    state.t += 1
    return state


@njit(cache=True)
def _update_block(D, E, B, s, H, use_h):
    # Sequential updates of atoms s..s+m-1; E[:, p] starts as D b_j - c_j for
    # the dictionary as it was on entry and is corrected as earlier atoms move.
    n = D.shape[0]
    m = E.shape[1]
    u = np.empty(n)
    delta = np.empty(n)
    for p in range(m):
        j = s + p
        bjj = B[j, j]
        if bjj < UNUSED_ATOM:
            continue
        norm2 = 0.0
        for i in range(n):
            v = D[i, j] - E[i, p] / bjj
            if use_h:
                v -= H[i, j]
            u[i] = v
            norm2 += v * v
        scale = 1.0 / max(1.0, np.sqrt(norm2))
        for i in range(n):
            v = u[i] * scale
            delta[i] = v - D[i, j]
            D[i, j] = v
        for q in range(p + 1, m):
            bq = B[j, s + q]
            if bq != 0.0:
                for i in range(n):
                    E[i, q] += delta[i] * bq


def atom_update(state: TrainerState) -> np.ndarray:
    """One pass of the atom update over all atoms; returns ``state.D``.

    Atoms whose ``B[j, j]`` is below 1e-12 have never been coded and are
    left untouched. Work is blocked: each block's ``D b_j - c_j`` terms
    come from one matrix product and are then patched as the atoms
    before them change, which is the same as updating one atom at a time.
    """
    if state.t < 1:
        raise ValueError("atom_update needs at least one accumulated sample")
    D, B, C = state.D, state.B, state.C
    k = D.shape[1]
    coef = state.sign * 2.0 * state.lambda2 * state.sigma / state.t
    use_h = coef != 0.0
    # The contrast term acts on the atoms from before this pass.
    H = coef * (state.G @ D) if use_h else np.empty((0, 0))
    for s in range(0, k, _BLOCK):
        e = min(s + _BLOCK, k)
        # Rows of B for unused atoms are zero (B is PSD), so they add nothing.
        # B is symmetric; this form yields a column-major E without copies.
        E = (B[s:e] @ D.T).T - C[:, s:e]
        _update_block(D, E, B, s, H, use_h)
    return D


def objective(D, X, W, lambda1, lambda2, sign, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> float:
    """Mean over patches of reconstruction + sparsity + signed contrast terms.

    Codes come from ``lasso_solve`` at ``lambda1``; the contrast term of
    patch i is ``sign * lambda2 * ||D^T w_i||^2``.
    """
    D = np.asarray(getattr(D, "atoms", D), dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if X.shape[0] != D.shape[0] or W.shape != X.shape:
        raise DimensionError("D, X and W dimensions disagree")
    A = lasso_solve_many(X, D, lambda1, tol=tol, max_iter=max_iter)
    R = X - D @ A
    per = 0.5 * np.einsum("ij,ij->j", R, R) + lambda1 * np.abs(A).sum(axis=0)
    DW = D.T @ W
    per = per + sign * lambda2 * np.einsum("ij,ij->j", DW, DW)
    return float(per.mean())


@dataclass
class TrainResult:
    dictionary: Dictionary
    history: list[tuple[int, float]]


def train_dictionary(X, W, k, lambda1, lambda2, sigma, iterations, seed=0, sign=1,
                     kind=NON_SALIENT, validation=None, eval_every=200,
                     tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, callback=None) -> TrainResult:
    """Train one dictionary from column-stacked patches ``X`` and weights ``W``.

    ``validation`` is an optional ``(X_val, W_val)`` pair; its objective is
    recorded at t = 0 and every ``eval_every`` iterations in ``history``.
    ``callback(state)`` is invoked after each iteration when given.
    """
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] == 0:
        raise DimensionError("need at least one training patch")
    if W.shape != X.shape:
        raise DimensionError("weights must match patches")
    if iterations < 0:
        raise ValueError("iterations must be nonnegative")
    rng = np.random.default_rng(seed)
    state = TrainerState(_init_atoms(X, k, rng), sign, lambda1, lambda2, sigma, kind)
    history = []

    def record():
        if validation is not None:
            val = objective(state.D, validation[0], validation[1], lambda1, lambda2, sign, tol, max_iter)
            history.append((state.t, val))
            log.info("%s t=%d validation objective %.6f", kind, state.t, val)

    record()
    m = X.shape[1]
    for _ in range(iterations):
        i = int(rng.integers(m))
        code = lasso_solve(X[:, i], state.D, lambda1, tol=tol, max_iter=max_iter)
        update_accumulators(state, X[:, i], code.alpha, W[:, i])
        atom_update(state)
        if callback is not None:
            callback(state)
        if state.t % eval_every == 0:
            record()
    return TrainResult(state.dictionary, history)


def train(pos, neg, config, validation=None):
    """Train the salient and non-salient dictionaries independently.

    ``pos``/``neg`` are ``(X, W)`` pairs; ``config`` supplies ``k``,
    ``lambda1``, ``lambda2`` (or ``effective_lambda2``), ``sigma``,
    ``iterations``, ``seed`` and ``signs``. ``validation`` optionally maps
    ``"salient"``/``"non-salient"`` to held-out ``(X, W)`` pairs.

    Returns ``(salient_result, non_salient_result)`` as TrainResult.
    """
    T = config.iterations
    if T is None or T <= 0:
        raise ValueError("iterations must be a positive integer")
    lambda2 = getattr(config, "effective_lambda2", config.lambda2)
    s_pos, s_neg = getattr(config, "signs", (-1, 1))
    seeds = np.random.SeedSequence(config.seed).generate_state(2)
    validation = validation or {}
    results = []
    for (X, W), sign, kind, seed in ((pos, s_pos, SALIENT, seeds[0]), (neg, s_neg, NON_SALIENT, seeds[1])):
        results.append(train_dictionary(
            X, W, config.k, config.lambda1, lambda2, config.sigma, T, seed=int(seed),
            sign=sign, kind=kind, validation=validation.get(kind),
            eval_every=getattr(config, "log_every", 200),
            tol=getattr(config, "tol", DEFAULT_TOL), max_iter=getattr(config, "max_iter", DEFAULT_MAX_ITER)))
    return results[0], results[1]


# Binary format: "CDLD", u16 version, u8 kind, u32 n, u32 k, n*k float64
# (column-major), u64 CRC-64/XZ of all preceding bytes. Little-endian.
MAGIC = b"CDLD"
VERSION = 1
_HEADER = struct.Struct("<4sHBII")


def _crc64_table():
    poly = 0xC96C5795D7870F42
    table = np.zeros(256, dtype=np.uint64)
    for i in range(256):
        c = i
        for _ in range(8):
            c = (c >> 1) ^ poly if c & 1 else c >> 1
        table[i] = c
    return table


_CRC_TABLE = _crc64_table()


@njit(cache=True)
def _crc64(data, table):
    crc = np.uint64(0xFFFFFFFFFFFFFFFF)
    for b in data:
        crc = table[(crc ^ np.uint64(b)) & np.uint64(0xFF)] ^ (crc >> np.uint64(8))
    return crc ^ np.uint64(0xFFFFFFFFFFFFFFFF)


def crc64(data: bytes) -> int:
    """CRC-64/XZ (ECMA-182 polynomial, reflected)."""
    return int(_crc64(np.frombuffer(data, dtype=np.uint8), _CRC_TABLE))


def dumps(d: Dictionary) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, _KIND_CODES[d.kind], d.n, d.k)
    body = header + d.atoms.astype("<f8").tobytes(order="F")
    return body + struct.pack("<Q", crc64(body))


def loads(data: bytes) -> Dictionary:
    if len(data) < _HEADER.size:
        raise FormatError("truncated dictionary header", len(data))
    magic, version, kind, n, k = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    kinds = {v: name for name, v in _KIND_CODES.items()}
    if kind not in kinds:
        raise FormatError(f"unknown dictionary kind {kind}", 6)
    expected = _HEADER.size + 8 * n * k + 8
    if len(data) != expected:
        raise FormatError(f"expected {expected} bytes for n={n}, k={k}, got {len(data)}",
                          min(len(data), expected))
    body = data[:-8]
    (stored,) = struct.unpack_from("<Q", data, len(body))
    if stored != crc64(body):
        raise FormatError("checksum mismatch", len(body))
    atoms = np.frombuffer(body, dtype="<f8", offset=_HEADER.size).reshape((n, k), order="F")
    return Dictionary(atoms.astype(np.float64), kinds[kind])


def save_dictionary(d: Dictionary, path):
    Path(path).write_bytes(dumps(d))


def load_dictionary(path) -> Dictionary:
    return loads(Path(path).read_bytes())
