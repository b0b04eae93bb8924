"""Bit-packed ±1 vectors, binarization, exact popcount dot products, rotations.

Packing layout (also the wire format): component i of a ±1 vector lives at bit
(i mod 64) of 64-bit word (i div 64), with +1 stored as a set bit and -1 as a
clear bit.  Words are little-endian.  Bits at positions >= dim are always zero,
so popcounts over whole words need no masking.  Serialized form:

    [dim: u64 little-endian] [words: ceil(dim/64) x u64 little-endian]

A BitMatrix serializes as [rows: u64] [cols: u64] followed by the packed rows
back to back, each padded to whole words.
"""

import numpy as np

from .validation import as_real_array, as_real_matrix, as_real_vector, check_positive_int, check_same_length

WORD_BITS = 64
WORD_DTYPE = np.dtype("<u8")


def num_words(dim):
    """Number of 64-bit words needed for dim packed components."""
    return (dim + WORD_BITS - 1) // WORD_BITS


def binarize_signs(x):
    """theta(x) as floats: +1.0 where x > 0, else -1.0 (zero maps to -1)."""
    return np.where(np.asarray(x) > 0, 1.0, -1.0)


def pack_signs(x):
    """Pack the signs of a real array into uint64 words along the last axis.

    Bit j of the output is set iff x[..., j] > 0, so packing applies theta
    implicitly.  Padding bits in the final word of each row are zero.

    Args:
        x: array of shape (..., d).

    Returns:
        uint64 array of shape (..., ceil(d/64)), little-endian words.
    """
    bits = np.asarray(x) > 0
    packed = np.packbits(bits, axis=-1, bitorder="little")
    pad = (-packed.shape[-1]) % 8
    if pad:
        zeros = np.zeros(packed.shape[:-1] + (pad,), dtype=np.uint8)
        packed = np.concatenate([packed, zeros], axis=-1)
    packed = np.ascontiguousarray(packed)
    return packed.view(WORD_DTYPE)


def unpack_bits(words, dim):
    """Unpack uint64 words (last axis) into a boolean array of length dim."""
    rows = np.ascontiguousarray(words, dtype=WORD_DTYPE)
    as_bytes = rows.view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=-1, count=dim, bitorder="little")
    return bits.astype(bool)


def unpack_signs(words, dim):
    """Unpack uint64 words into ±1.0 floats of length dim along the last axis."""
    return np.where(unpack_bits(words, dim), 1.0, -1.0)


def _check_padding(words, dim):
    """Raise if any bit at position >= dim is set."""
    rem = dim % WORD_BITS
    if rem:
        mask = WORD_DTYPE.type((1 << rem) - 1)
        tail = words[..., -1]
        if np.any(tail & ~mask):
            raise ValueError("padding bits past dim must be zero")


class BitVector:
    """An immutable ±1 vector of logical length dim, stored one bit per entry."""

    __slots__ = ("dim", "words")

    def __init__(self, dim, words):
        dim = check_positive_int(dim, "dim")
        words = np.array(words, dtype=WORD_DTYPE, copy=True)
        if words.ndim != 1 or words.shape[0] != num_words(dim):
            raise ValueError(f"expected {num_words(dim)} words for dim {dim}, got shape {words.shape}")
        _check_padding(words, dim)
        words.setflags(write=False)
        self.dim = dim
        self.words = words

    @classmethod
    def from_signs(cls, v):
        """Pack a vector whose entries are exactly -1 or +1."""
        arr = as_real_vector(v, "sign vector")
        if not np.all(np.abs(arr) == 1.0):
            raise ValueError("entries must be exactly -1 or +1")
        return cls(arr.size, pack_signs(arr))

    def to_signs(self):
        """Unpack to a ±1.0 float64 vector."""
        return unpack_signs(self.words, self.dim)

    def popcount(self):
        """Number of +1 components."""
        return int(np.bitwise_count(self.words).sum())

    def to_bytes(self):
        """Serialize: u64 dim header then the words, all little-endian."""
        header = np.array([self.dim], dtype=WORD_DTYPE)
        return header.tobytes() + self.words.tobytes()

    @classmethod
    def from_bytes(cls, data):
        """Inverse of to_bytes; rejects truncated or oversized payloads."""
        if len(data) < 8:
            raise ValueError("truncated BitVector: missing dim header")
        dim = int(np.frombuffer(data[:8], dtype=WORD_DTYPE)[0])
        if dim < 1:
            raise ValueError(f"invalid BitVector dim {dim}")
        need = 8 + 8 * num_words(dim)
        if len(data) < need:
            raise ValueError(f"truncated BitVector: expected {need} bytes, got {len(data)}")
        if len(data) > need:
            raise ValueError(f"trailing bytes after BitVector payload ({len(data) - need})")
        words = np.frombuffer(data[8:need], dtype=WORD_DTYPE)
        return cls(dim, words)

    def __len__(self):
        return self.dim

    def __eq__(self, other):
        if not isinstance(other, BitVector):
            return NotImplemented
        return self.dim == other.dim and bool(np.array_equal(self.words, other.words))

    def __hash__(self):
        return hash((self.dim, self.words.tobytes()))

    def __repr__(self):
        return f"BitVector(dim={self.dim}, plus_ones={self.popcount()})"


class BitMatrix:
    """Rows of ±1 vectors sharing one width, packed one bit per entry."""

    __slots__ = ("rows", "cols", "words")

    def __init__(self, rows, cols, words):
        rows = check_positive_int(rows, "rows")
        cols = check_positive_int(cols, "cols")
        words = np.array(words, dtype=WORD_DTYPE, copy=True)
        if words.ndim != 2 or words.shape != (rows, num_words(cols)):
            raise ValueError(f"expected word shape {(rows, num_words(cols))}, got {words.shape}")
        _check_padding(words, cols)
        words.setflags(write=False)
        self.rows = rows
        self.cols = cols
        self.words = words

    @classmethod
    def from_signs(cls, m):
        """Pack a matrix whose entries are exactly -1 or +1."""
        arr = as_real_matrix(m, "sign matrix")
        if not np.all(np.abs(arr) == 1.0):
            raise ValueError("entries must be exactly -1 or +1")
        return cls(arr.shape[0], arr.shape[1], pack_signs(arr))

    @classmethod
    def from_real(cls, m):
        """Binarize a real matrix row-wise and pack the result."""
        arr = as_real_matrix(m, "matrix")
        return cls(arr.shape[0], arr.shape[1], pack_signs(arr))

    def row(self, i):
        return BitVector(self.cols, self.words[i])

    def to_signs(self):
        """Unpack to a (rows, cols) ±1.0 float64 matrix."""
        return unpack_signs(self.words, self.cols)

    def to_bytes(self):
        """Serialize: u64 rows, u64 cols, then row-major words, little-endian."""
        header = np.array([self.rows, self.cols], dtype=WORD_DTYPE)
        return header.tobytes() + self.words.tobytes()

    @classmethod
    def from_bytes(cls, data):
        if len(data) < 16:
            raise ValueError("truncated BitMatrix: missing header")
        rows, cols = (int(v) for v in np.frombuffer(data[:16], dtype=WORD_DTYPE))
        if rows < 1 or cols < 1:
            raise ValueError(f"invalid BitMatrix shape ({rows}, {cols})")
        need = 16 + 8 * rows * num_words(cols)
        if len(data) < need:
            raise ValueError(f"truncated BitMatrix: expected {need} bytes, got {len(data)}")
        if len(data) > need:
            raise ValueError(f"trailing bytes after BitMatrix payload ({len(data) - need})")
        words = np.frombuffer(data[16:need], dtype=WORD_DTYPE).reshape(rows, num_words(cols))
        return cls(rows, cols, words)

    def __eq__(self, other):
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return (self.rows, self.cols) == (other.rows, other.cols) and bool(np.array_equal(self.words, other.words))

    def __repr__(self):
        return f"BitMatrix(rows={self.rows}, cols={self.cols})"


def binarize(v):
    """theta applied to a real vector, packed: bit i set iff v[i] > 0."""
    arr = as_real_vector(v, "vector")
    return BitVector(arr.size, pack_signs(arr))


def binarize_matrix(m):
    """theta applied row-wise to a real matrix, packed."""
    return BitMatrix.from_real(m)


def dot_bb(a, b):
    """Exact integer dot product of two packed ±1 vectors.

    Computed as d - 2*popcount(a xor b): each differing bit contributes a -1
    product, each agreeing bit a +1.
    """
    if not isinstance(a, BitVector) or not isinstance(b, BitVector):
        raise TypeError("dot_bb expects two BitVector operands")
    check_same_length(a.dim, b.dim, "a", "b")
    ham = int(np.bitwise_count(a.words ^ b.words).sum())
    return a.dim - 2 * ham


def dot_bb_many(a, b):
    """All pairwise dot products between the rows of two BitMatrix operands.

    Returns an int64 array of shape (a.rows, b.rows).  Work is chunked so the
    intermediate xor buffer stays small.
    """
    if not isinstance(a, BitMatrix) or not isinstance(b, BitMatrix):
        raise TypeError("dot_bb_many expects two BitMatrix operands")
    check_same_length(a.cols, b.cols, "a", "b")
    out = np.empty((a.rows, b.rows), dtype=np.int64)
    words_per_pair = b.rows * b.words.shape[1]
    step = max(1, 4_000_000 // max(1, words_per_pair))
    bw = b.words[np.newaxis, :, :]
    for start in range(0, a.rows, step):
        block = a.words[start:start + step, np.newaxis, :] ^ bw
        disagree = np.bitwise_count(block).sum(axis=2, dtype=np.int64)
        out[start:start + step] = a.cols - 2 * disagree
    return out


def dot_rb(w, a):
    """Dot product of a real vector with a packed ±1 vector."""
    w = as_real_vector(w, "w")
    if not isinstance(a, BitVector):
        raise TypeError("dot_rb expects a BitVector second operand")
    check_same_length(w.size, a.dim, "w", "a")
    bits = unpack_bits(a.words, a.dim)
    return float(np.where(bits, w, -w).sum())


def fwht(x):
    """Orthonormal Walsh-Hadamard transform along the last axis.

    The length of the last axis must be a power of two.  The transform is its
    own inverse (H = H^T = H^-1).
    """
    x = as_real_array(x, "x")
    d = x.shape[-1]
    if d & (d - 1):
        raise ValueError(f"Walsh-Hadamard length must be a power of two, got {d}")
    shape = x.shape
    a = x.reshape(-1, d).copy()
    n = a.shape[0]
    h = 1
    while h < d:
        a = a.reshape(n, d // (2 * h), 2, h)
        even = a[:, :, 0, :].copy()
        odd = a[:, :, 1, :].copy()
        a[:, :, 0, :] = even + odd
        a[:, :, 1, :] = even - odd
        a = a.reshape(n, d)
        h *= 2
    return (a / np.sqrt(d)).reshape(shape)


class RotationMatrix:
    """An orthogonal map in dense or fast (sign diagonal + Walsh-Hadamard) form.

    Dense form stores the matrix explicitly.  Fast form stores a ±1 diagonal s
    and represents R = H diag(s) with H the orthonormal Walsh-Hadamard matrix,
    applied in O(d log d).
    """

    __slots__ = ("dim", "kind", "matrix", "signs")

    def __init__(self, dim, kind, matrix=None, signs=None):
        self.dim = check_positive_int(dim, "dim")
        if kind == "dense":
            matrix = as_real_matrix(matrix, "matrix")
            if matrix.shape != (dim, dim):
                raise ValueError(f"dense rotation must be {dim}x{dim}, got {matrix.shape}")
            matrix = matrix.copy()
            matrix.setflags(write=False)
            self.matrix = matrix
            self.signs = None
        elif kind == "fast":
            if dim & (dim - 1):
                raise ValueError(f"fast rotation dim must be a power of two, got {dim}")
            signs = as_real_vector(signs, "signs")
            if signs.size != dim or not np.all(np.abs(signs) == 1.0):
                raise ValueError("fast rotation signs must be a ±1 vector of length dim")
            signs = signs.copy()
            signs.setflags(write=False)
            self.signs = signs
            self.matrix = None
        else:
            raise ValueError(f"unknown rotation kind {kind!r}")
        self.kind = kind

    def apply(self, x):
        """R x, acting on the last axis (vectors or batches of rows)."""
        x = as_real_array(x, "x")
        check_same_length(x.shape[-1], self.dim, "x", "rotation")
        if self.kind == "dense":
            return x @ self.matrix.T
        return fwht(x * self.signs)

    def apply_t(self, x):
        """R^T x, acting on the last axis."""
        x = as_real_array(x, "x")
        check_same_length(x.shape[-1], self.dim, "x", "rotation")
        if self.kind == "dense":
            return x @ self.matrix
        return fwht(x) * self.signs

    def as_matrix(self):
        """Materialize the dense matrix (column k = R e_k)."""
        if self.kind == "dense":
            return self.matrix.copy()
        return self.apply(np.eye(self.dim)).T


def random_rotation(dim, seed=0, kind="dense"):
    """Draw a random rotation.

    Dense form: QR of a seeded standard-normal matrix with the R-diagonal sign
    fix, then a determinant sign correction so det = +1.  Fast form: a random
    ±1 diagonal composed with the normalized Walsh-Hadamard transform (dim must
    be a power of two).
    """
    dim = check_positive_int(dim, "dim")
    rng = np.random.Generator(np.random.Philox(key=seed))
    if kind == "dense":
        gauss = rng.standard_normal((dim, dim))
        q, r = np.linalg.qr(gauss)
        q = q * np.sign(np.diag(r))
        if np.linalg.slogdet(q)[0] < 0:
            q[:, 0] = -q[:, 0]
        return RotationMatrix(dim, "dense", matrix=q)
    if kind == "fast":
        signs = np.where(rng.random(dim) < 0.5, -1.0, 1.0)
        return RotationMatrix(dim, "fast", signs=signs)
    raise ValueError(f"unknown rotation kind {kind!r}")


def gbt(x, rotation=None):
    """Generalized binarization: R^T theta(R x), acting on the last axis.

    With rotation None (or the identity) this reduces to plain theta as reals.
    Output has the same shape as x and Euclidean norm sqrt(d) per vector.
    """
    x = as_real_array(x, "x")
    if rotation is None:
        return binarize_signs(x)
    rotated = rotation.apply(x)
    return rotation.apply_t(binarize_signs(rotated))
