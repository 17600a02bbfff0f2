"""Random LDPC codes realized from degree profiles.

Construction follows the configuration model, then removes parallel edges and
4-cycles by random edge swaps. Encoding uses a greedy approximate
lower-triangular ordering: most parity bits come out of forward substitution,
and a small dense GF(2) system fixes the remaining "gap" columns. Decoding is
flooding belief propagation on the edge list.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import galois
import numpy as np
import structlog
from scipy import sparse

from app.core.errors import CodeConstructionError, DomainError
from app.models.profile import DegreeProfile

logger = structlog.get_logger(__name__)

GF2 = galois.GF(2)
SWAP_BUDGET_PER_EDGE = 100
ONE = 1.0 - 1e-15


def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to ``total`` closest to ``weights * total``."""
    raw = weights * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _variable_degrees(profile: DegreeProfile, n: int) -> np.ndarray:
    counts = _largest_remainder(profile.var_node_fractions, n)
    return np.repeat(profile.var_degrees, counts)


def _check_degrees(profile: DegreeProfile, edges: int) -> np.ndarray:
    """Check degrees per the check node fractions, patched by +-1 to match ``edges`` sockets."""
    avg = 1.0 / float(np.sum(profile.chk_edge_fractions / profile.chk_degrees))
    m = max(1, int(round(edges / avg)))
    degrees = np.repeat(profile.chk_degrees, _largest_remainder(profile.chk_node_fractions, m)).astype(np.int64)
    diff = edges - int(degrees.sum())
    while diff != 0:
        if diff > 0:
            degrees[int(np.argmin(degrees))] += 1
            diff -= 1
        else:
            j = int(np.argmax(degrees))
            if degrees[j] <= 2:
                raise CodeConstructionError("check degrees cannot absorb the socket surplus; increase n")
            degrees[j] -= 1
            diff += 1
    return degrees


def _bad_edges(chk: np.ndarray, var: np.ndarray, m: int, n: int) -> np.ndarray:
    """Edges that are parallel duplicates or sit on a 4-cycle (one edge per offending pair)."""
    E = len(chk)
    key = chk.astype(np.int64) * n + var
    order = np.argsort(key, kind="stable")
    sk = key[order]
    bad = np.zeros(E, dtype=bool)
    bad[order[1:][sk[1:] == sk[:-1]]] = True

    H = sparse.csr_matrix((np.ones(E, dtype=np.int32), (chk, var)), shape=(m, n))
    H.data[:] = 1
    overlap = (H.T @ H).tocoo()
    sel = (overlap.row < overlap.col) & (overlap.data >= 2)
    if np.any(sel):
        csc = H.tocsc()
        for v1, v2 in zip(overlap.row[sel], overlap.col[sel]):
            shared = np.intersect1d(
                csc.indices[csc.indptr[v1]:csc.indptr[v1 + 1]],
                csc.indices[csc.indptr[v2]:csc.indptr[v2 + 1]],
                assume_unique=True,
            )
            pos = np.searchsorted(sk, shared[0] * n + v1)
            bad[order[pos]] = True
    return np.flatnonzero(bad)


def _repair_cycles(chk: np.ndarray, var: np.ndarray, m: int, n: int, rng: np.random.Generator) -> int:
    budget = SWAP_BUDGET_PER_EDGE * len(chk)
    swaps = 0
    while True:
        bad = _bad_edges(chk, var, m, n)
        if not bad.size:
            return swaps
        if swaps + bad.size > budget:
            raise CodeConstructionError(
                f"{bad.size} edges still on 4-cycles after {swaps} swaps; try a larger block length (n={n})"
            )
        partners = rng.integers(0, len(chk), size=bad.size)
        for e, f in zip(bad, partners):
            chk[e], chk[f] = chk[f], chk[e]
        swaps += int(bad.size)


# -----------------------------------------------------------------------------
# Encoder
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class _Encoder:
    pivot_cols: np.ndarray
    others_ptr: np.ndarray
    others: np.ndarray
    gap_solve_cols: np.ndarray
    check_rows: np.ndarray
    check_indep: np.ndarray
    phi_inv: np.ndarray
    info_cols: np.ndarray

    def forward(self, c: np.ndarray) -> None:
        """Fill pivot columns in triangular order; ``c`` has shape (n, B)."""
        ptr, others = self.others_ptr, self.others
        for t, p in enumerate(self.pivot_cols):
            c[p] = np.bitwise_xor.reduce(c[others[ptr[t]:ptr[t + 1]]], axis=0)


def _triangularize(H: sparse.csr_matrix, info: np.ndarray):
    """Greedy diagonal extension with gap columns declared whenever it stalls.

    Returns (pivot rows, pivot cols, gap cols, leftover rows) in encoding order.
    """
    m, n = H.shape
    csc = H.tocsc()
    known = np.zeros(n, dtype=bool)
    known[info] = True
    unknown_cols = [set(H.indices[H.indptr[r]:H.indptr[r + 1]][~known[H.indices[H.indptr[r]:H.indptr[r + 1]]]])
                    for r in range(m)]
    degree = np.array([len(s) for s in unknown_cols], dtype=np.int64)
    done = np.zeros(m, dtype=bool)
    stack = sorted(np.flatnonzero(degree == 1).tolist(), reverse=True)
    pivot_rows: list[int] = []
    pivot_cols: list[int] = []
    gap: list[int] = []

    def declare(col: int) -> None:
        known[col] = True
        for r in csc.indices[csc.indptr[col]:csc.indptr[col + 1]]:
            if done[r] or col not in unknown_cols[r]:
                continue
            unknown_cols[r].discard(col)
            degree[r] -= 1
            if degree[r] == 1:
                stack.append(int(r))

    while True:
        while stack:
            r = stack.pop()
            if done[r] or degree[r] != 1:
                continue
            (p,) = unknown_cols[r]
            done[r] = True
            pivot_rows.append(r)
            pivot_cols.append(int(p))
            declare(int(p))
        open_rows = np.flatnonzero(~done & (degree >= 1))
        if not open_rows.size:
            break
        r = int(open_rows[np.argmin(degree[open_rows])])
        for col in sorted(unknown_cols[r])[:-1]:
            gap.append(int(col))
            declare(int(col))
    leftover = np.flatnonzero(~done)
    return np.asarray(pivot_rows), np.asarray(pivot_cols), np.asarray(gap, dtype=np.int64), leftover


def _independent_rows(phi: np.ndarray) -> np.ndarray:
    red = np.asarray(GF2(phi.T.copy()).row_reduce())
    return np.array([int(np.flatnonzero(row)[0]) for row in red if row.any()], dtype=np.int64)


def _build_encoder(H: sparse.csr_matrix, rng: np.random.Generator, degrees: np.ndarray) -> _Encoder:
    m, n = H.shape
    # high-degree columns carry information; parity columns then form sparse chains
    order = np.lexsort((rng.random(n), -degrees))
    info = np.sort(order[: n - m])
    pivot_rows, pivot_cols, gap, leftover = _triangularize(H, info)

    ptr = [0]
    others: list[np.ndarray] = []
    for r, p in zip(pivot_rows, pivot_cols):
        cols = H.indices[H.indptr[r]:H.indptr[r + 1]]
        others.append(cols[cols != p])
        ptr.append(ptr[-1] + len(others[-1]))
    flat = np.concatenate(others) if others else np.zeros(0, dtype=np.int64)

    probe = _Encoder(
        pivot_cols=pivot_cols, others_ptr=np.asarray(ptr), others=flat,
        gap_solve_cols=np.zeros(0, dtype=np.int64), check_rows=leftover,
        check_indep=np.zeros(0, dtype=np.int64), phi_inv=np.zeros((0, 0), dtype=np.uint8), info_cols=info,
    )
    G = len(gap)
    if G == 0:
        return probe

    unit = np.zeros((n, G), dtype=np.uint8)
    unit[gap, np.arange(G)] = 1
    probe.forward(unit)
    phi = np.stack([np.bitwise_xor.reduce(unit[H.indices[H.indptr[r]:H.indptr[r + 1]]], axis=0) for r in leftover])

    red = np.asarray(GF2(phi.copy()).row_reduce())
    pivots = [int(np.flatnonzero(row)[0]) for row in red if row.any()]
    free = np.setdiff1d(np.arange(G), pivots)
    indep = _independent_rows(phi)
    sub = GF2(phi[np.ix_(indep, pivots)])
    phi_inv = np.asarray(np.linalg.inv(sub), dtype=np.uint8) if len(pivots) else np.zeros((0, 0), dtype=np.uint8)
    # gap columns the dense system cannot pin down become information bits
    info_cols = np.sort(np.concatenate([info, gap[free]])) if free.size else info
    return _Encoder(
        pivot_cols=pivot_cols,
        others_ptr=np.asarray(ptr),
        others=flat,
        gap_solve_cols=gap[np.asarray(pivots, dtype=np.int64)],
        check_rows=leftover,
        check_indep=indep,
        phi_inv=phi_inv,
        info_cols=info_cols,
    )


# -----------------------------------------------------------------------------
# Code object
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class LdpcCode:
    """Parity-check graph as an edge list sorted by check, plus its encoder."""

    n: int
    m: int
    chk: np.ndarray
    var: np.ndarray
    var_degree: np.ndarray
    chk_degree: np.ndarray
    rank: int
    encoder: _Encoder = field(repr=False)
    H: sparse.csr_matrix = field(repr=False)

    @property
    def k(self) -> int:
        return len(self.encoder.info_cols)

    @property
    def rate(self) -> float:
        return self.k / self.n

    @property
    def edges(self) -> int:
        return len(self.chk)

    @property
    def info_cols(self) -> np.ndarray:
        return self.encoder.info_cols

    def syndrome(self, bits: np.ndarray) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.int64)
        return np.asarray(self.H @ bits) % 2

    def is_codeword(self, bits: np.ndarray) -> bool:
        return not np.any(self.syndrome(bits))

    def encode(self, info_bits: np.ndarray) -> np.ndarray:
        """Codeword(s) carrying ``info_bits`` on :attr:`info_cols`; accepts (k,) or (k, B)."""
        info_bits = np.asarray(info_bits, dtype=np.uint8)
        single = info_bits.ndim == 1
        if info_bits.shape[0] != self.k:
            raise DomainError(f"expected {self.k} information bits, got {info_bits.shape[0]}")
        block = info_bits[:, None] if single else info_bits
        enc = self.encoder
        c = np.zeros((self.n, block.shape[1]), dtype=np.uint8)
        c[enc.info_cols] = block
        enc.forward(c)
        if len(enc.gap_solve_cols):
            s = np.asarray(self.H[enc.check_rows] @ c.astype(np.int64)) % 2
            g = (enc.phi_inv.astype(np.int64) @ s[enc.check_indep]) % 2
            c[enc.gap_solve_cols] = g.astype(np.uint8)
            enc.forward(c)
        return c[:, 0] if single else c

    def realized_fractions(self) -> dict[int, float]:
        degrees, counts = np.unique(self.var_degree, return_counts=True)
        return {int(d): c / self.n for d, c in zip(degrees, counts)}


def build_ldpc(profile: DegreeProfile, n: int, seed: int = 0, stream: int = 0) -> LdpcCode:
    """Realize a random code of length ``n`` with the profile's node fractions."""
    if n < 4:
        raise DomainError(f"block length {n} too small")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream, 0, 4])))
    var_deg = _variable_degrees(profile, n)
    E = int(var_deg.sum())
    chk_deg = _check_degrees(profile, E)
    m = len(chk_deg)
    if m >= n:
        raise CodeConstructionError(f"profile gives {m} checks for {n} variables; no information bits remain")

    var = np.repeat(np.arange(n), var_deg)
    chk = rng.permutation(np.repeat(np.arange(m), chk_deg))
    swaps = _repair_cycles(chk, var, m, n, rng)

    order = np.lexsort((var, chk))
    chk, var = chk[order], var[order]
    H = sparse.csr_matrix((np.ones(E, dtype=np.int64), (chk, var)), shape=(m, n))
    encoder = _build_encoder(H, rng, var_deg)
    k = len(encoder.info_cols)
    code = LdpcCode(n=n, m=m, chk=chk, var=var, var_degree=var_deg, chk_degree=np.bincount(chk, minlength=m),
                    rank=n - k, encoder=encoder, H=H)

    probe = rng.integers(0, 2, size=(k, 2), dtype=np.uint8)
    if not all(code.is_codeword(c) for c in code.encode(probe).T):
        raise CodeConstructionError("parity-check matrix rank deficiency could not be repaired by the encoder")
    logger.info("ldpc.built", n=n, m=m, k=k, edges=E, swaps=swaps, gap=len(encoder.gap_solve_cols))
    return code


# -----------------------------------------------------------------------------
# Belief propagation
# -----------------------------------------------------------------------------
class BpDecoder:
    """Flooding sum-product decoder keeping check-to-variable messages between calls.

    Messages are LLRs with positive values favouring bit 0, clipped at ``clip``.
    """

    def __init__(self, code: LdpcCode, clip: float = 40.0):
        self.code = code
        self.clip = clip
        self.c2v = np.zeros(code.edges)

    def reset(self) -> None:
        self.c2v[:] = 0.0

    def extrinsic(self) -> np.ndarray:
        """Sum of incoming check messages per variable (channel LLR excluded)."""
        return np.bincount(self.code.var, weights=self.c2v, minlength=self.code.n)

    def iterate(self, channel_llr: np.ndarray, iterations: int = 1) -> np.ndarray:
        """Run ``iterations`` flooding rounds and return the decoder extrinsic LLRs."""
        code = self.code
        for _ in range(iterations):
            total = channel_llr + self.extrinsic()
            v2c = np.clip(total[code.var] - self.c2v, -self.clip, self.clip)
            t = np.tanh(0.5 * v2c)
            neg = t < 0.0
            logmag = np.log(np.maximum(np.abs(t), 1e-300))
            row_log = np.bincount(code.chk, weights=logmag, minlength=code.m)
            row_neg = np.bincount(code.chk, weights=neg.astype(float), minlength=code.m).astype(np.int64)
            mag = np.exp(row_log[code.chk] - logmag)
            sign = np.where((row_neg[code.chk] + neg) % 2 == 1, -1.0, 1.0)
            self.c2v = np.clip(2.0 * np.arctanh(np.clip(sign * mag, -ONE, ONE)), -self.clip, self.clip)
        return self.extrinsic()

    def hard_decision(self, channel_llr: np.ndarray) -> np.ndarray:
        return (channel_llr + self.extrinsic() < 0.0).astype(np.uint8)


def decode(code: LdpcCode, channel_llr: np.ndarray, max_iter: int = 100, clip: float = 40.0) -> tuple[np.ndarray, int]:
    """Stand-alone decoding with early stop on a zero syndrome."""
    dec = BpDecoder(code, clip)
    bits = dec.hard_decision(channel_llr)
    if code.is_codeword(bits):
        return bits, 0
    for it in range(1, max_iter + 1):
        dec.iterate(channel_llr)
        bits = dec.hard_decision(channel_llr)
        if code.is_codeword(bits):
            return bits, it
    return bits, max_iter
