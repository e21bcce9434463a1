"""Sparse nonnegative count matrices (the true data)."""

from dataclasses import dataclass, field

import numpy as np

from privpf.exceptions import CapacityError, DomainError

# Largest dense matrix materialized without an explicit override.
DEFAULT_CELL_BUDGET = 10**8


def check_capacity(n_rows, n_cols, max_cells=DEFAULT_CELL_BUDGET):
    cells = int(n_rows) * int(n_cols)
    if max_cells is not None and cells > max_cells:
        raise CapacityError(
            f"{n_rows}x{n_cols} = {cells} cells exceeds the dense budget of {max_cells}; "
            "raise max_cells or process the matrix in row chunks")


@dataclass
class CountMatrix:
    """Count matrix stored as (row, col, count) triplets.

    Cells not listed are zero.  Duplicate keys, negative counts and
    out-of-range indices are rejected on construction.
    """

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    counts: np.ndarray
    row_labels: list = field(default=None)
    col_labels: list = field(default=None)

    def __post_init__(self):
        self.n_rows = int(self.n_rows)
        self.n_cols = int(self.n_cols)
        if self.n_rows <= 0 or self.n_cols <= 0:
            raise DomainError("matrix dimensions must be positive")
        self.rows = np.asarray(self.rows, dtype=np.int64).ravel()
        self.cols = np.asarray(self.cols, dtype=np.int64).ravel()
        self.counts = np.asarray(self.counts, dtype=np.int64).ravel()
        if not (self.rows.size == self.cols.size == self.counts.size):
            raise DomainError("rows, cols and counts must have equal length")
        if np.any(self.counts < 0):
            raise DomainError("counts must be nonnegative")
        if np.any((self.rows < 0) | (self.rows >= self.n_rows)
                  | (self.cols < 0) | (self.cols >= self.n_cols)):
            raise DomainError("triplet index out of bounds")
        keys = self.rows * self.n_cols + self.cols
        if np.unique(keys).size != keys.size:
            raise DomainError("duplicate (row, col) key")
        for name, labels, n in (("row", self.row_labels, self.n_rows),
                                ("col", self.col_labels, self.n_cols)):
            if labels is not None and len(labels) != n:
                raise DomainError(f"{name} label table has {len(labels)} entries, expected {n}")

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(np.count_nonzero(self.counts))

    @classmethod
    def from_dense(cls, array, **labels):
        array = np.asarray(array)
        if array.ndim != 2:
            raise DomainError("expected a 2-d array")
        if np.any(array < 0):
            raise DomainError("counts must be nonnegative")
        if not np.all(array == np.round(array)):
            raise DomainError("counts must be integers")
        r, c = np.nonzero(array)
        return cls(array.shape[0], array.shape[1], r, c, array[r, c].astype(np.int64), **labels)

    def to_dense(self, max_cells=DEFAULT_CELL_BUDGET):
        check_capacity(self.n_rows, self.n_cols, max_cells)
        out = np.zeros(self.shape, dtype=np.int64)
        out[self.rows, self.cols] = self.counts
        return out

    def total(self):
        return int(self.counts.sum())

    def mean(self):
        """Empirical mean over all cells, zeros included."""
        return self.total() / (self.n_rows * self.n_cols)

    def sorted(self):
        """Copy with triplets in row-major order and explicit zeros dropped."""
        keep = self.counts != 0
        order = np.lexsort((self.cols[keep], self.rows[keep]))
        return CountMatrix(self.n_rows, self.n_cols, self.rows[keep][order], self.cols[keep][order],
                           self.counts[keep][order], self.row_labels, self.col_labels)

    def __eq__(self, other):
        if not isinstance(other, CountMatrix):
            return NotImplemented
        a, b = self.sorted(), other.sorted()
        return (a.shape == b.shape and np.array_equal(a.rows, b.rows)
                and np.array_equal(a.cols, b.cols) and np.array_equal(a.counts, b.counts))
