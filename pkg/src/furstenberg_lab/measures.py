"""Finitely supported measures on SL(2,R) and sampling of their products.

Products are always composed left to right, ``g = g_1 g_2 ... g_n`` with
``g_i`` i.i.d. With this orientation ``upsilon_+(g_1...g_n)`` is distributed
approximately like the stationary measure of the left random walk, while
``omega_-(g)`` is driven by the last letters.

Randomness comes from counter-based Philox streams. A batch of ``S``
samples is cut into fixed chunks of :data:`CHUNK` samples and chunk ``c``
always draws from stream ``(seed, c)``, so results do not depend on how
chunks are distributed over threads.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .projective import (
    DET_TOLERANCE,
    ConfigurationError,
    Mat2,
    act_arrays,
    angle_mod,
    svd2,
    svd_arrays,
)

CHUNK = 1 << 16
WORD_BLOCK = 1 << 22
ENUMERATION_CAP = 10 ** 6
WEIGHT_TOLERANCE = 1e-12
# rescale running products once an entry exceeds 2**RESCALE_EXP
RESCALE_EXP = 256


class MeasureError(ValueError):
    """Invalid measure document."""


@dataclass(frozen=True)
class StreamHandle:
    """Identifies one independent random stream ``(seed, index)``."""

    seed: int
    index: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.index),))
        return np.random.Generator(np.random.Philox(ss))


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ConfigurationError(f"seed must be a non-negative integer, got {seed!r}")
    if seed >= 2 ** 64:
        raise ConfigurationError("seed must fit in 64 bits")
    return int(seed)


def check_count(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < minimum:
        raise ConfigurationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class MatrixMeasure:
    """Probability vector on finitely many SL(2,R) matrices."""

    matrices: tuple[Mat2, ...]
    weights: tuple[float, ...]
    alpha_bar: float = field(init=False)

    def __post_init__(self):
        if len(self.matrices) == 0:
            raise MeasureError("empty measure")
        if len(self.matrices) != len(self.weights):
            raise MeasureError("matrices and weights differ in length")
        w = np.asarray(self.weights, dtype=float)
        if not np.all(np.isfinite(w)) or np.any(w <= 0) or abs(w.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise MeasureError("not a probability vector")
        object.__setattr__(self, "matrices", tuple(self.matrices))
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        ab = max(math.log(svd2(g).kappa) for g in self.matrices)
        object.__setattr__(self, "alpha_bar", max(ab, 0.0))

    @classmethod
    def uniform(cls, matrices: Sequence[Mat2]) -> "MatrixMeasure":
        k = len(matrices)
        if k == 0:
            raise MeasureError("empty measure")
        return cls(tuple(matrices), tuple([1.0 / k] * k))

    @property
    def size(self) -> int:
        return len(self.matrices)

    def entry_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        e = np.array([g.entries for g in self.matrices], dtype=float)
        return e[:, 0], e[:, 1], e[:, 2], e[:, 3]

    def adjoint(self) -> "MatrixMeasure":
        """The measure ``g*`` pushed forward from ``mu`` (transposes)."""
        return MatrixMeasure(tuple(Mat2(g.a, g.c, g.b, g.d, g.det_tolerance) for g in self.matrices),
                             self.weights)

    def to_document(self) -> dict:
        return {"atoms": [{"matrix": [[g.a, g.b], [g.c, g.d]], "weight": w}
                          for g, w in zip(self.matrices, self.weights)]}

    def fingerprint(self) -> str:
        """Short stable hash of the atoms and weights."""
        text = json.dumps(self.to_document(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_measure(document) -> MatrixMeasure:
    """Build a measure from a JSON string or an already parsed mapping.

    Expected layout::

        {"atoms": [{"matrix": [[a, b], [c, d]], "weight": p}, ...],
         "det_tolerance": 1e-9}

    Raises
    ------
    MeasureError
        ``"empty measure"``, ``"not unimodular"`` or
        ``"not a probability vector"``, or a parse error.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MeasureError(f"measure document is not valid JSON: {exc}") from None
    if not isinstance(document, dict) or "atoms" not in document:
        raise MeasureError("measure document needs an 'atoms' list")
    tol = float(document.get("det_tolerance", DET_TOLERANCE))
    atoms = document["atoms"]
    if not isinstance(atoms, list) or len(atoms) == 0:
        raise MeasureError("empty measure")
    mats, weights = [], []
    for i, atom in enumerate(atoms):
        try:
            rows = atom["matrix"]
            weight = float(atom["weight"])
            arr = np.asarray(rows, dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise MeasureError(f"atom {i} is malformed: {exc}") from None
        if arr.shape != (2, 2):
            raise MeasureError(f"atom {i}: matrix must be 2x2")
        try:
            mats.append(Mat2(arr[0, 0], arr[0, 1], arr[1, 0], arr[1, 1], tol))
        except ValueError as exc:
            if "not unimodular" in str(exc):
                raise MeasureError(f"not unimodular (atom {i}): {exc}") from None
            raise MeasureError(f"atom {i}: {exc}") from None
        weights.append(weight)
    return MatrixMeasure(tuple(mats), tuple(weights))


def load_measure_file(path) -> MatrixMeasure:
    with open(path, "r", encoding="utf-8") as fh:
        return load_measure(fh.read())


# ---------------------------------------------------------------------------
# reference measures
# ---------------------------------------------------------------------------

def reference_measure() -> MatrixMeasure:
    """Uniform measure on ``[[2,1],[1,1]]`` and ``[[1,1],[1,2]]``."""
    return MatrixMeasure.uniform([Mat2(2, 1, 1, 1), Mat2(1, 1, 1, 2)])


def rotation_measure(angles=(1.0, math.sqrt(2.0))) -> MatrixMeasure:
    return MatrixMeasure.uniform([Mat2.rotation(a) for a in angles])


def diag_rotation_measure() -> MatrixMeasure:
    """Uniform on ``diag(2, 1/2)`` and the quarter turn; Lyapunov exponent 0."""
    return MatrixMeasure.uniform([Mat2.diag(2.0), Mat2.rotation(math.pi / 2)])


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProductSample:
    matrix: Mat2
    length: int
    word: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("length must be >= 1")


@dataclass
class ProductBatch:
    """Vectorised summary of many products of the same length.

    Attributes
    ----------
    log_norm : ndarray
        ``log |g|`` for each product.
    omega_minus, upsilon_plus : ndarray or None
        Singular directions as angles in ``[0, pi)``.
    weights : ndarray or None
        Probability of each product (enumeration); ``None`` means equal
        weights ``1/S`` (sampling).
    words : ndarray or None
        Atom indices, shape ``(S, n)``, when requested.
    """

    n: int
    log_norm: np.ndarray
    omega_minus: np.ndarray | None = None
    upsilon_plus: np.ndarray | None = None
    weights: np.ndarray | None = None
    words: np.ndarray | None = None

    @property
    def size(self) -> int:
        return int(self.log_norm.size)


def _draw_indices(rng: np.random.Generator, cumw: np.ndarray, shape) -> np.ndarray:
    if cumw.size == 1:
        return np.zeros(shape, dtype=np.int64)
    u = rng.random(shape)
    idx = np.searchsorted(cumw, u, side="right")
    return np.minimum(idx, cumw.size - 1)


def _multiply_words(entries, words: np.ndarray):
    """Left-to-right products of the given words with power-of-two rescaling.

    Returns scaled entries and the base-2 exponent that was removed.
    """
    A, B, C, D = entries
    m, n = words.shape
    a = A[words[:, 0]].copy()
    b = B[words[:, 0]].copy()
    c = C[words[:, 0]].copy()
    d = D[words[:, 0]].copy()
    expo = np.zeros(m, dtype=np.int64)
    for k in range(1, n):
        w = words[:, k]
        e, f, g, h = A[w], B[w], C[w], D[w]
        a, b, c, d = a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h
        big = np.maximum(np.maximum(np.abs(a), np.abs(b)), np.maximum(np.abs(c), np.abs(d)))
        if np.any(big > 2.0 ** RESCALE_EXP):
            _, ex = np.frexp(big)
            ex = np.where(big > 2.0 ** RESCALE_EXP, ex, 0)
            a, b, c, d = (np.ldexp(v, -ex) for v in (a, b, c, d))
            expo += ex
    return (a, b, c, d), expo


def summarize_words(mu: MatrixMeasure, words: np.ndarray, directions: bool = True):
    """``(log_norm, omega_minus, upsilon_plus)`` for each row of ``words``."""
    (a, b, c, d), expo = _multiply_words(mu.entry_arrays(), words)
    s1, _, wp, up = svd_arrays(a, b, c, d)
    log_norm = np.log(s1) + expo * math.log(2.0)
    if not directions:
        return log_norm, None, None
    return log_norm, angle_mod(wp + np.pi / 2), up


def sample_product(mu: MatrixMeasure, n: int, rng: StreamHandle | np.random.Generator) -> ProductSample:
    """One product ``g_1 ... g_n`` drawn from ``mu^n``."""
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n!r}")
    gen = rng.generator() if isinstance(rng, StreamHandle) else rng
    cumw = np.cumsum(mu.weights)
    word = _draw_indices(gen, cumw, (int(n),))
    g = mu.matrices[word[0]]
    for i in word[1:]:
        g = g @ mu.matrices[i]
    return ProductSample(g, int(n), tuple(int(i) for i in word))


def _chunk_bounds(samples: int) -> list[tuple[int, int]]:
    return [(s, min(s + CHUNK, samples)) for s in range(0, samples, CHUNK)]


def map_chunks(fn, samples: int, threads: int = 1) -> list:
    """Apply ``fn(chunk_index, size)`` to every chunk, in chunk order."""
    bounds = _chunk_bounds(samples)
    jobs = [(i, hi - lo) for i, (lo, hi) in enumerate(bounds)]
    if threads <= 1 or len(jobs) <= 1:
        return [fn(i, m) for i, m in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def sample_batch(mu: MatrixMeasure, n: int, samples: int, seed: int, threads: int = 1,
                 directions: bool = True, keep_words: bool = False) -> ProductBatch:
    """Draw ``samples`` independent products of length ``n``."""
    n = check_count(n, "n")
    samples = check_count(samples, "samples")
    seed = check_seed(seed)
    cumw = np.cumsum(mu.weights)

    # row blocks bound memory; draws are sequential so the values do not change
    rows = max(1, WORD_BLOCK // n)

    def work(chunk: int, size: int):
        gen = StreamHandle(seed, chunk).generator()
        parts = []
        for lo in range(0, size, rows):
            words = _draw_indices(gen, cumw, (min(rows, size - lo), n))
            parts.append((*summarize_words(mu, words, directions), words if keep_words else None))
        ln = np.concatenate([p[0] for p in parts])
        wm = np.concatenate([p[1] for p in parts]) if directions else None
        up = np.concatenate([p[2] for p in parts]) if directions else None
        wd = np.concatenate([p[3] for p in parts]) if keep_words else None
        return ln, wm, up, wd

    parts = map_chunks(work, samples, threads)
    log_norm = np.concatenate([p[0] for p in parts])
    wm = np.concatenate([p[1] for p in parts]) if directions else None
    up = np.concatenate([p[2] for p in parts]) if directions else None
    words = np.concatenate([p[3] for p in parts]) if keep_words else None
    return ProductBatch(n, log_norm, wm, up, None, words)


def enumeration_words(k: int, n: int, cap: int = ENUMERATION_CAP) -> np.ndarray:
    if k ** n > cap:
        raise ConfigurationError(f"enumeration too large: {k}^{n} > {cap}")
    return np.array(list(itertools.product(range(k), repeat=n)), dtype=np.int64).reshape(-1, n)


def enumerate_batch(mu: MatrixMeasure, n: int, cap: int = ENUMERATION_CAP,
                    directions: bool = True) -> ProductBatch:
    """Exact law of ``mu^n`` as a weighted batch."""
    n = check_count(n, "n")
    words = enumeration_words(mu.size, n, cap)
    w = np.prod(np.asarray(mu.weights)[words], axis=1)
    ln, wm, up = summarize_words(mu, words, directions)
    return ProductBatch(n, ln, wm, up, w, words)


def enumerate_products(mu: MatrixMeasure, n: int, cap: int = ENUMERATION_CAP) -> list[tuple[Mat2, float]]:
    """All ordered products of length ``n`` with their probabilities."""
    n = check_count(n, "n")
    words = enumeration_words(mu.size, n, cap)
    out = []
    for word in words:
        g = mu.matrices[word[0]]
        p = mu.weights[word[0]]
        for i in word[1:]:
            g = g @ mu.matrices[i]
            p *= mu.weights[i]
        out.append((g, p))
    return out


# ---------------------------------------------------------------------------
# orbit sampling of the stationary measure
# ---------------------------------------------------------------------------

ORBIT_CHAINS = 1 << 12


def orbit_samples(mu: MatrixMeasure, samples: int, seed: int, burn_in: int = 64,
                  chains: int = ORBIT_CHAINS, threads: int = 1) -> np.ndarray:
    """Points of the random walk ``x_{k+1} = g_k x_k`` after burn-in.

    ``chains`` independent walks are run in blocks of 1024, each block on
    its own stream, and every post burn-in position is recorded.
    """
    samples = check_count(samples, "samples")
    seed = check_seed(seed)
    block = 1024
    chains = max(block, (check_count(chains, "chains") // block) * block)
    steps = -(-samples // chains)
    A, B, C, D = mu.entry_arrays()
    cumw = np.cumsum(mu.weights)
    nblocks = chains // block

    def run(bi: int) -> np.ndarray:
        gen = StreamHandle(seed, bi).generator()
        x = gen.uniform(0.0, np.pi, block)
        out = np.empty((steps, block))
        for k in range(burn_in + steps):
            w = _draw_indices(gen, cumw, (block,))
            x, _ = act_arrays(A[w], B[w], C[w], D[w], x)
            if k >= burn_in:
                out[k - burn_in] = x
        return out.ravel()

    if threads <= 1:
        parts = [run(i) for i in range(nblocks)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, range(nblocks)))
    return np.concatenate(parts)[:samples]


# ---------------------------------------------------------------------------
# strong irreducibility / proximality heuristic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SipReport:
    proximal_witness: tuple[int, ...] | None
    witness_trace: float | None
    irreducibility_flag: str  # "likely" | "violated" | "inconclusive"
    invariant_lines: tuple[float, ...] = ()


def _fixed_lines(g: Mat2) -> tuple[float, float]:
    """Attracting and repelling fixed lines of a hyperbolic ``g``."""
    tr = g.trace
    disc = math.sqrt(tr * tr - 4.0)
    out = []
    for lam in ((tr + disc) / 2 if tr > 0 else (tr - disc) / 2,
                (tr - disc) / 2 if tr > 0 else (tr + disc) / 2):
        # (g - lam) v = 0
        r1 = (g.a - lam, g.b)
        r2 = (g.c, g.d - lam)
        r = r1 if math.hypot(*r1) >= math.hypot(*r2) else r2
        out.append(angle_mod(math.atan2(r[0], -r[1])))
    return out[0], out[1]


def _permutes(g: Mat2, lines: Sequence[float], tol: float) -> bool:
    for th in lines:
        img, _ = act_arrays(g.a, g.b, g.c, g.d, th)
        if not any(abs(math.sin(float(img) - o)) <= tol for o in lines):
            return False
    return True


def sip_heuristic(mu: MatrixMeasure, max_word_length: int, trials: int, seed: int,
                  tol: float = 1e-9) -> SipReport:
    """Search for a proximal word and test the obvious invariant line sets.

    Words up to ``max_word_length`` are enumerated when cheap and sampled
    otherwise. A word with ``|trace| > 2`` has a simple leading eigenvalue.
    For the first such witness we test whether its attracting line, its
    repelling line, or the pair is permuted by every atom; any hit means
    strong irreducibility fails. This is a diagnostic and certifies nothing.
    """
    max_word_length = check_count(max_word_length, "max_word_length")
    trials = check_count(trials, "trials", 0)
    seed = check_seed(seed)
    witness = None
    wtrace = None
    gen = StreamHandle(seed, 0).generator()
    cumw = np.cumsum(mu.weights)
    for n in range(1, max_word_length + 1):
        if mu.size ** n <= 4096:
            candidates = [tuple(int(i) for i in w) for w in enumeration_words(mu.size, n)]
        else:
            candidates = [tuple(int(i) for i in _draw_indices(gen, cumw, (n,))) for _ in range(trials)]
        for word in candidates:
            g = mu.matrices[word[0]]
            for i in word[1:]:
                g = g @ mu.matrices[i]
            if abs(g.trace) > 2.0 + 1e-12:
                witness, wtrace = word, g.trace
                break
        if witness is not None:
            break
    if witness is None:
        return SipReport(None, None, "inconclusive")
    g = mu.matrices[witness[0]]
    for i in witness[1:]:
        g = g @ mu.matrices[i]
    att, rep = _fixed_lines(g)
    for lines in ((att,), (rep,), (att, rep)):
        if all(_permutes(h, lines, tol) for h in mu.matrices):
            return SipReport(witness, wtrace, "violated", tuple(lines))
    return SipReport(witness, wtrace, "likely")
