"""Connectivity matrices and averaging matrices for generalized product codes.

Every code family is described by a binary symmetric connectivity matrix
``eta`` together with a scale constant ``gamma`` (the number of check nodes
per position is ``d = gamma * n``).  Matrices are kept exact: ``eta`` is an
integer array and averaging matrices carry an integer numerator array plus a
common integer denominator, so comparisons against hand-written fixtures never
need a tolerance.  Conversion to floating point happens in the DE code.

Indices are 0-based throughout; position ``i`` here is position ``i + 1`` in
the usual 1-based notation.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd
from typing import Callable

import numpy as np

FAMILIES = ("pc", "staircase", "braided", "ensemble_emulating", "extended_braided", "custom")
INTERLEAVED_FAMILIES = ("braided", "ensemble_emulating", "extended_braided")


class ConstructionError(ValueError):
    pass


@dataclass(eq=False)
class RationalMatrix:
    """Matrix with exact rational entries ``num / den`` (shared denominator)."""

    num: np.ndarray
    den: int = 1

    def __post_init__(self):
        self.num = np.asarray(self.num, dtype=np.int64)
        if self.den <= 0:
            raise ConstructionError("denominator must be positive")
        g = gcd(int(np.gcd.reduce(self.num, axis=None)) if self.num.size else 0, self.den)
        if g > 1:
            self.num = self.num // g
            self.den //= g

    @property
    def shape(self):
        return self.num.shape

    def entry(self, i: int, j: int) -> Fraction:
        return Fraction(int(self.num[i, j]), self.den)

    def to_fractions(self) -> list[list[Fraction]]:
        return [[Fraction(int(v), self.den) for v in row] for row in self.num]

    def to_float(self) -> np.ndarray:
        return self.num / float(self.den)

    def row_sums(self) -> list[Fraction]:
        return [Fraction(int(s), self.den) for s in self.num.sum(axis=1)]

    def transpose(self) -> "RationalMatrix":
        return type(self)(self.num.T.copy(), self.den)

    def __matmul__(self, other: "RationalMatrix") -> "RationalMatrix":
        return RationalMatrix(self.num @ other.num, self.den * other.den)

    def __eq__(self, other):
        if not isinstance(other, RationalMatrix):
            return NotImplemented
        if self.num.shape != other.num.shape:
            return False
        return bool(np.array_equal(self.num * other.den, other.num * self.den))

    def __repr__(self):
        return f"{type(self).__name__}(den={self.den}, num=\n{self.num})"

    @classmethod
    def from_fraction_rows(cls, rows) -> "RationalMatrix":
        fr = [[Fraction(v) for v in row] for row in rows]
        den = 1
        for row in fr:
            for v in row:
                den = den * v.denominator // gcd(den, v.denominator)
        num = np.array([[int(v * den) for v in row] for row in fr], dtype=np.int64)
        return cls(num, den)


class AveragingMatrix(RationalMatrix):
    """Square rational matrix that drives the DE recursion."""

    def __post_init__(self):
        super().__post_init__()
        if self.num.ndim != 2 or self.num.shape[0] != self.num.shape[1]:
            raise ConstructionError(f"averaging matrix must be square, got {self.num.shape}")

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.num, self.num.T))


@dataclass(eq=False)
class EtaSpec:
    eta: np.ndarray
    gamma: Fraction
    family: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=np.int64)
        self.gamma = Fraction(self.gamma)
        if self.eta.ndim != 2 or self.eta.shape[0] != self.eta.shape[1]:
            raise ConstructionError(f"eta must be square, got shape {self.eta.shape}")
        if self.gamma <= 0:
            raise ConstructionError("gamma must be positive")
        if self.family not in FAMILIES:
            raise ConstructionError(f"unknown family tag {self.family!r}")

    @property
    def size(self) -> int:
        return self.eta.shape[0]

    def same_matrix(self, other: "EtaSpec") -> bool:
        return self.gamma == other.gamma and np.array_equal(self.eta, other.eta)


@dataclass(frozen=True)
class EnsembleParams:
    spatial_length: int
    coupling_width: int

    def __post_init__(self):
        L, w = self.spatial_length, self.coupling_width
        if L < 1 or w < 1:
            raise ConstructionError("spatial length and coupling width must be positive")
        if w > L:
            raise ConstructionError(f"coupling width {w} exceeds spatial length {L}")

    @property
    def reduced_length(self) -> int:
        return self.spatial_length - self.coupling_width + 1


def make_pc() -> EtaSpec:
    return EtaSpec(np.array([[0, 1], [1, 0]]), Fraction(1), "pc")


def make_staircase(L: int) -> EtaSpec:
    if L < 2:
        raise ConstructionError("staircase codes need L >= 2")
    eta = np.zeros((L, L), dtype=np.int64)
    i = np.arange(L - 1)
    eta[i, i + 1] = eta[i + 1, i] = 1
    return EtaSpec(eta, Fraction(1, 2), "staircase")


def make_braided(L: int) -> EtaSpec:
    if L < 4 or L % 2:
        raise ConstructionError("block-wise braided codes need even L >= 4")
    eta = np.zeros((L, L), dtype=np.int64)
    i = np.arange(L - 1)
    eta[i, i + 1] = eta[i + 1, i] = 1
    # 1-based (2i-1, 2i+2) for i in [L/2 - 1]
    a = 2 * np.arange(L // 2 - 1)
    eta[a, a + 3] = eta[a + 3, a] = 1
    return EtaSpec(eta, Fraction(1, 3), "braided")


def ensemble_A(params: EnsembleParams) -> RationalMatrix:
    """Band matrix of the coupled ensemble, shape ``(L - w + 1, L)``, entries ``1/w``."""
    L, w = params.spatial_length, params.coupling_width
    Lr = params.reduced_length
    num = np.zeros((Lr, L), dtype=np.int64)
    for i in range(Lr):
        num[i, i:i + w] = 1
    return RationalMatrix(num, w)


def ensemble_B(params: EnsembleParams) -> AveragingMatrix:
    """The symmetric ``A^T A`` averaging matrix of the ensemble recursion."""
    A = ensemble_A(params)
    prod = A.transpose() @ A
    return AveragingMatrix(prod.num, prod.den)


def _shift_set(w: int, k: int) -> list[int] | None:
    """Shift set S with S == -S (mod w) and |S| == k, or None if impossible."""
    half = w // 2
    pairs = [s for s in range(1, (w + 1) // 2)]  # shifts s with s != -s mod w
    singles = [0] + ([half] if w % 2 == 0 and w > 1 else [])
    for n_single in range(len(singles) + 1):
        rest = k - n_single
        if rest >= 0 and rest % 2 == 0 and rest // 2 <= len(pairs):
            S = singles[:n_single]
            for s in pairs[: rest // 2]:
                S += [s, w - s]
            return sorted(S)
    return None


def symmetric_block(w: int, k: int, method: str = "circulant") -> np.ndarray:
    """Binary symmetric ``w x w`` matrix with exactly ``k`` ones per row and column.

    ``circulant`` places ones at ``(j - i) mod w`` in a negation-closed shift
    set; ``hankel`` places ones where ``(i + j) mod w < k``, which is symmetric
    for any ``k``.  If the circulant shift set does not exist the Hankel form
    is used instead.
    """
    if not 0 <= k <= w:
        raise ConstructionError(f"need 0 <= k <= w, got k={k}, w={w}")
    i, j = np.indices((w, w))
    if method == "circulant":
        S = _shift_set(w, k)
        if S is not None:
            return np.isin((j - i) % w, S).astype(np.int64)
        method = "hankel"
    if method == "hankel":
        return (((i + j) % w) < k).astype(np.int64)
    raise ConstructionError(f"unknown expansion method {method!r}")


def interleave(eta_prime: np.ndarray) -> np.ndarray:
    """Bipartite doubling: ``eta[2i+1, 2j] = eta'[i, j]``, ``eta[2i, 2j+1] = eta'[j, i]``."""
    ep = np.asarray(eta_prime, dtype=np.int64)
    if ep.ndim != 2 or ep.shape[0] != ep.shape[1]:
        raise ConstructionError("eta' must be square")
    if not np.array_equal(ep, ep.T):
        raise ConstructionError("eta' must be symmetric")
    m = ep.shape[0]
    eta = np.zeros((2 * m, 2 * m), dtype=np.int64)
    eta[1::2, 0::2] = ep
    eta[0::2, 1::2] = ep.T
    return eta


def deinterleave(eta: np.ndarray) -> np.ndarray:
    """Inverse of :func:`interleave`; raises if ``eta`` lacks the doubled structure."""
    eta = np.asarray(eta)
    n = eta.shape[0]
    if n % 2:
        raise ConstructionError("interleaved matrices have even side")
    if eta[0::2, 0::2].any() or eta[1::2, 1::2].any():
        raise ConstructionError("odd-odd / even-even blocks are not zero")
    ep = eta[1::2, 0::2]
    if not np.array_equal(eta[0::2, 1::2], ep.T) or not np.array_equal(ep, ep.T):
        raise ConstructionError("eta is not an interleaving of a symmetric matrix")
    return ep.copy()


def make_ensemble_emulating(
    params: EnsembleParams,
    expansion: str | Callable[[int, int], np.ndarray] = "circulant",
) -> EtaSpec:
    L, w = params.spatial_length, params.coupling_width
    B = ensemble_B(params)
    P = B.num * (w * w) // B.den  # integer, entries in 0..w
    if isinstance(expansion, str):
        expand = lambda k: symmetric_block(w, int(k), method=expansion)  # noqa: E731
        tag = expansion
    else:
        expand = lambda k: np.asarray(expansion(w, int(k)), dtype=np.int64)  # noqa: E731
        tag = getattr(expansion, "__name__", "custom")
    eta_p = np.zeros((w * L, w * L), dtype=np.int64)
    for I in range(L):
        for J in range(I, L):
            blk = expand(P[I, J])
            if not np.array_equal(blk, blk.T) or (blk.sum(axis=0) != P[I, J]).any():
                raise ConstructionError(f"expansion of P[{I},{J}]={P[I, J]} is not a valid block")
            eta_p[I * w:(I + 1) * w, J * w:(J + 1) * w] = blk
            eta_p[J * w:(J + 1) * w, I * w:(I + 1) * w] = blk.T
    return EtaSpec(
        interleave(eta_p), Fraction(1, w * w), "ensemble_emulating",
        meta={"L": L, "w": w, "expansion": tag},
    )


def make_extended_braided(L: int, w: int) -> EtaSpec:
    if w < 1 or L < w:
        raise ConstructionError(f"extended braided codes need L >= w >= 1, got L={L}, w={w}")
    i, j = np.indices((L, L))
    eta_p = (np.abs(i - j) < w).astype(np.int64)
    return EtaSpec(interleave(eta_p), Fraction(1, 2 * w - 1), "extended_braided",
                   meta={"L": L, "w": w})


def averaging_matrix(spec: EtaSpec) -> AveragingMatrix:
    g = spec.gamma
    return AveragingMatrix(spec.eta * g.numerator, g.denominator)


@dataclass
class Diagnostics:
    symmetric: bool
    binary: bool
    asymmetric_entries: list
    nonbinary_entries: list
    row_sums: list
    interior_rows_unit: bool

    @property
    def ok(self) -> bool:
        return self.symmetric and self.binary and self.interior_rows_unit

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "symmetric": self.symmetric,
            "binary": self.binary,
            "asymmetric_entries": self.asymmetric_entries,
            "nonbinary_entries": self.nonbinary_entries,
            "row_sums": [str(s) for s in self.row_sums],
            "interior_rows_unit": self.interior_rows_unit,
        }


def _interior_rows(spec: EtaSpec) -> range:
    # boundary rows are shortened by construction; how many depends on the family
    n = spec.size
    margin = {
        "pc": 0,
        "staircase": 1,
        "braided": 2,
        "extended_braided": 2 * (spec.meta.get("w", 1) - 1),
        "ensemble_emulating": 2 * spec.meta.get("w", 1) * (spec.meta.get("w", 1) - 1),
    }.get(spec.family, 0)
    if 2 * margin >= n:
        return range(0)
    return range(margin, n - margin)


def validate(spec: EtaSpec) -> Diagnostics:
    eta = spec.eta
    asym = [(int(i), int(j)) for i, j in zip(*np.nonzero(eta != eta.T)) if i < j]
    nonbin = [(int(i), int(j)) for i, j in zip(*np.nonzero((eta != 0) & (eta != 1)))]
    sums = averaging_matrix(spec).row_sums()
    interior = _interior_rows(spec)
    unit = all(sums[i] == 1 for i in interior) if spec.family != "custom" else True
    return Diagnostics(not asym, not nonbin, asym, nonbin, sums, unit)


def to_json(spec: EtaSpec) -> str:
    iu, ju = np.nonzero(np.triu(spec.eta))
    doc = {
        "family": spec.family,
        "gamma": [spec.gamma.numerator, spec.gamma.denominator],
        "size": spec.size,
        "ones": [[int(i), int(j)] for i, j in zip(iu, ju)],
    }
    if spec.meta:
        doc["meta"] = spec.meta
    return json.dumps(doc)


def from_json(text: str) -> EtaSpec:
    doc = json.loads(text)
    n = int(doc["size"])
    eta = np.zeros((n, n), dtype=np.int64)
    for i, j in doc["ones"]:
        eta[i, j] = eta[j, i] = 1
    return EtaSpec(eta, Fraction(*doc["gamma"]), doc["family"], meta=doc.get("meta", {}))


def to_csv(spec: EtaSpec) -> str:
    buf = io.StringIO()
    np.savetxt(buf, spec.eta, fmt="%d", delimiter=",")
    return buf.getvalue()


def from_csv(text: str, gamma: Fraction, family: str = "custom") -> EtaSpec:
    eta = np.loadtxt(io.StringIO(text), delimiter=",", dtype=np.int64, ndmin=2)
    return EtaSpec(eta, gamma, family)
