"""Growable working storage for triangular factors during factorization.

One AugmentedFactor holds a factor in its compressed orientation (columns for
a lower factor, rows for an upper factor).  Primary slices are appended once,
finalized entries never move; all permutations are index relabelings.  Three
tiers of bookkeeping are supported:

* partial       -- fan-in traversal of the current secondary slice only
                   (per-slice cursors + an array-based bucket list);
* partial-gap   -- adds a deferral gap: the current secondary slice can be
                   relocated past position n, with up to 2n secondary slots;
* full          -- replaces cursors/buckets with per-slot linked chains over
                   entries, enabling O(nnz) interchanges of any two pending
                   secondary slices (required by rook pivoting).

Physical slot convention: finalized secondary slices occupy slots 0..k-1,
the pending slice k sits at slot k (after lazy compaction), un-deferred
pending slices i>k at slot i+gap, and the t-th deferred slice at slot n+t.
A logical index i >= k therefore always maps to physical slot i+gap.
"""

from __future__ import annotations

import enum

import numpy as np

from .sparse import COL_MAJOR, ROW_MAJOR, CompressedMatrix, from_arrays


class AugMode(enum.Enum):
    PARTIAL = "partial"
    PARTIAL_GAP = "partial-with-gap"
    FULL = "full"


class CapacityError(RuntimeError):
    """More than 2n secondary slots requested; indicates an internal bug."""


class AugmentedFactor:
    def __init__(self, n: int, mode: AugMode = AugMode.PARTIAL_GAP,
                 dtype=np.float64):
        self.n = int(n)
        self.mode = mode
        self.gap = 0
        self._compacted = True
        self._cols = 0                    # appended primary slices
        self._nnz = 0
        cap0 = max(16, 4 * n)
        self._sec = np.empty(cap0, dtype=np.int64)   # physical secondary index
        self._val = np.empty(cap0, dtype=dtype)
        self._col_ptr = np.zeros(n + 1, dtype=np.int64)
        nslots = 2 * self.n + 1
        if mode is AugMode.FULL:
            # tier 3: entry chains per secondary slot + value indirection
            self._ent_col = np.empty(cap0, dtype=np.int64)
            self._ent_next = np.empty(cap0, dtype=np.int64)
            self._sec_head = np.full(nslots, -1, dtype=np.int64)
            self._sec_tail = np.full(nslots, -1, dtype=np.int64)
            self._value_pos = np.empty(cap0, dtype=np.int64)
            self._inv_value_pos = np.empty(cap0, dtype=np.int64)
        else:
            # tier 2: per-column cursor + bucket list keyed by physical slot
            self._cursor = np.zeros(n, dtype=np.int64)
            self._bucket_head = np.full(nslots, -1, dtype=np.int64)
            self._bucket_next = np.full(n, -1, dtype=np.int64)
        self.cells = 0            # cumulative array cells touched
        self.last_op_cells = 0

    # -- basic introspection ------------------------------------------------

    @property
    def appended(self) -> int:
        return self._cols

    @property
    def nnz(self) -> int:
        return self._nnz

    @property
    def value_pos(self) -> np.ndarray:
        return self._value_pos[:self._nnz]

    @property
    def inv_value_pos(self) -> np.ndarray:
        return self._inv_value_pos[:self._nnz]

    def column_view(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Physical secondary indices and values of primary slice j (views)."""
        s, e = self._col_ptr[j], self._col_ptr[j + 1]
        return self._sec[s:e], self._val[s:e]

    def _logical_boundary(self) -> int:
        return self._cols if self._compacted else self._cols - 1

    def logical_of_phys(self, p: np.ndarray):
        """Map physical slots to logical secondary indices (current state)."""
        b = self._logical_boundary()
        return np.where(p <= b, p, p - self.gap)

    # -- growth helpers -----------------------------------------------------

    def _grow(self, extra: int) -> None:
        need = self._nnz + extra
        if need <= self._sec.shape[0]:
            return
        cap = max(need, 2 * self._sec.shape[0])
        self._sec = np.resize(self._sec, cap)
        self._val = np.resize(self._val, cap)
        if self.mode is AugMode.FULL:
            self._ent_col = np.resize(self._ent_col, cap)
            self._ent_next = np.resize(self._ent_next, cap)
            self._value_pos = np.resize(self._value_pos, cap)
            self._inv_value_pos = np.resize(self._inv_value_pos, cap)

    # -- tier-2 bucket list ---------------------------------------------------

    def _bucket_insert(self, j: int, p: int) -> None:
        self._bucket_next[j] = self._bucket_head[p]
        self._bucket_head[p] = j
        self.cells += 2

    def _bucket_cols(self, p: int) -> list[int]:
        out = []
        j = self._bucket_head[p]
        while j != -1:
            out.append(int(j))
            j = self._bucket_next[j]
        self.cells += len(out) + 1
        return out

    # -- tier-3 chains --------------------------------------------------------

    def _chain_entries(self, p: int) -> list[int]:
        out = []
        e = self._sec_head[p]
        while e != -1:
            out.append(int(e))
            e = self._ent_next[e]
        self.cells += len(out) + 1
        return out

    def _chain_push(self, p: int, e: int) -> None:
        self._ent_next[e] = -1
        if self._sec_head[p] == -1:
            self._sec_head[p] = e
        else:
            self._ent_next[self._sec_tail[p]] = e
        self._sec_tail[p] = e
        self.cells += 2

    def _chain_relocate(self, src: int, dst: int) -> int:
        """Relabel every entry of slot src to dst and move the chain head."""
        ents = self._chain_entries(src)
        for e in ents:
            self._sec[e] = dst
        self._sec_head[dst] = self._sec_head[src]
        self._sec_tail[dst] = self._sec_tail[src]
        self._sec_head[src] = -1
        self._sec_tail[src] = -1
        self.cells += len(ents) + 4
        return len(ents)

    # -- compaction (lazy, once per step) -------------------------------------

    def _ensure_compact(self) -> None:
        if self._compacted or self.gap == 0:
            self._compacted = True
            return
        k = self._cols
        src = k + self.gap
        if self.mode is AugMode.FULL:
            self._chain_relocate(src, k)
        else:
            for j in self._bucket_cols(src):
                self._sec[self._cursor[j]] = k
                self.cells += 1
            self._bucket_head[k] = self._bucket_head[src]
            self._bucket_head[src] = -1
        self._compacted = True

    # -- public operations ----------------------------------------------------

    def append_column(self, k: int, rows, values) -> None:
        """Append primary slice k; ``rows`` are logical, sorted, all > k."""
        if k != self._cols:
            raise ValueError(f"expected slice {self._cols}, got {k}")
        if k >= self.n:
            raise CapacityError("all primary slices already appended")
        self._ensure_compact()
        rows = np.asarray(rows, dtype=np.int64)
        values = np.asarray(values)
        if rows.size and (rows.min() <= k or rows.max() >= self.n):
            raise ValueError("rows must lie strictly below the diagonal")
        phys = rows + self.gap
        s = self._nnz
        m = rows.size
        self._grow(m)
        self._sec[s:s + m] = phys
        self._val[s:s + m] = values
        self._col_ptr[k + 1] = s + m
        if self.mode is AugMode.FULL:
            eids = np.arange(s, s + m)
            self._ent_col[s:s + m] = k
            self._value_pos[s:s + m] = eids
            self._inv_value_pos[s:s + m] = eids
            for t in range(m):
                self._chain_push(int(phys[t]), s + t)
        else:
            # retire the current slice's bucket now that step k completes
            for j in self._bucket_cols(k):
                self._cursor[j] += 1
                c = self._cursor[j]
                if c < self._col_ptr[j + 1]:
                    self._bucket_insert(j, int(self._sec[c]))
            self._bucket_head[k] = -1
            self._cursor[k] = s
            if m:
                self._bucket_insert(k, int(phys[0]))
        self._nnz += m
        self._cols += 1
        self._compacted = self.gap == 0
        self.cells += 2 * m + 2
        self.last_op_cells = 2 * m + 2

    def _secondary_lists(self, k: int) -> tuple[list[int], list]:
        """Entries of the current secondary slice k among finalized slices."""
        if k != self._cols:
            raise ValueError(f"secondary slice {k} is not the current step")
        self._ensure_compact()
        cols, vals = [], []
        if self.mode is AugMode.FULL:
            for e in self._chain_entries(k):
                cols.append(int(self._ent_col[e]))
                vals.append(self._val[e])
        else:
            for j in self._bucket_cols(k):
                cols.append(j)
                vals.append(self._val[self._cursor[j]])
        self.last_op_cells = len(cols) + 1
        return cols, vals

    def _secondary_at_phys(self, p: int) -> tuple[list[int], list]:
        """Full mode only: entries of the slice at physical slot p."""
        cols, vals = [], []
        for e in self._chain_entries(p):
            cols.append(int(self._ent_col[e]))
            vals.append(self._val[e])
        return cols, vals

    def iterate_secondary(self, k: int):
        """Yield ``(primary_index, value)`` over secondary slice k."""
        cols, vals = self._secondary_lists(k)
        return iter(zip(cols, vals))

    def defer_primary(self, k: int) -> None:
        """Relocate logical secondary slice k past position n (gap grows)."""
        if self.mode is AugMode.PARTIAL:
            raise RuntimeError("deferral requires gap or full augmentation")
        if k != self._cols:
            raise ValueError(f"cannot defer {k}: current step is {self._cols}")
        if self.gap >= self.n:
            raise CapacityError("deferral count exceeded n")
        self._ensure_compact()
        dst = self.n + self.gap
        touched = 0
        if self.mode is AugMode.FULL:
            touched = self._chain_relocate(k, dst)
        else:
            for j in self._bucket_cols(k):
                self._sec[self._cursor[j]] = dst
                self._cursor[j] += 1
                c = self._cursor[j]
                if c < self._col_ptr[j + 1]:
                    self._bucket_insert(j, int(self._sec[c]))
                touched += 1
                self.cells += 2
            self._bucket_head[k] = -1
        self.gap += 1
        self._compacted = False
        self.last_op_cells = touched + 2

    def interchange(self, i: int, r: int) -> None:
        """Exchange logical secondary slices i and r (both >= current step)."""
        if self.mode is not AugMode.FULL:
            raise RuntimeError("interchange requires full augmentation")
        k = self._cols
        if i > r:
            i, r = r, i
        if i < k:
            raise ValueError("interchange below the current step")
        self._ensure_compact()
        if i == r:
            self.last_op_cells = 0
            return
        pi = i if i == k else i + self.gap
        pr = r + self.gap
        ei = self._chain_entries(pi)
        er = self._chain_entries(pr)
        for e in ei:
            self._sec[e] = pr
        for e in er:
            self._sec[e] = pi
        for arr in (self._sec_head, self._sec_tail):
            arr[pi], arr[pr] = arr[pr], arr[pi]
        self.cells += len(ei) + len(er) + 4
        self.last_op_cells = len(ei) + len(er) + 4

    def finalize(self, n1: int, orientation: str = COL_MAJOR
                 ) -> tuple[CompressedMatrix, CompressedMatrix]:
        """Split into the n1 x n1 strictly-triangular block and the trailing
        block, both as immutable sorted compressed matrices.

        With column orientation (an L factor) the trailing block is
        (n-n1) x n1; with row orientation (a U factor) it is n1 x (n-n1).
        """
        if n1 != self._cols:
            raise ValueError("finalize requires all n1 slices appended")
        self._ensure_compact()
        lead_off = [0]
        lead_idx, lead_val = [], []
        trail_off = [0]
        trail_idx, trail_val = [], []
        for j in range(n1):
            sec, val = self.column_view(j)
            logical = self.logical_of_phys(sec)
            order = np.argsort(logical, kind="stable")
            logical = logical[order]
            v = val[order]
            cut = np.searchsorted(logical, n1)
            lead_idx.append(logical[:cut])
            lead_val.append(v[:cut])
            lead_off.append(lead_off[-1] + cut)
            trail_idx.append(logical[cut:] - n1)
            trail_val.append(v[cut:])
            trail_off.append(trail_off[-1] + (logical.size - cut))
        dtype = self._val.dtype

        def build(off, idx, val):
            idx = np.concatenate(idx) if idx else np.zeros(0, dtype=np.int64)
            val = np.concatenate(val) if val else np.zeros(0, dtype=dtype)
            return off, idx, val

        off, idx, val = build(lead_off, lead_idx, lead_val)
        leading = from_arrays(orientation, n1, n1, off, idx, val, check=False)
        off, idx, val = build(trail_off, trail_idx, trail_val)
        nt = self.n - n1
        if orientation == COL_MAJOR:
            trailing = from_arrays(COL_MAJOR, nt, n1, off, idx, val, check=False)
        else:
            trailing = from_arrays(ROW_MAJOR, n1, nt, off, idx, val, check=False)
        return leading, trailing

    # -- test hook -------------------------------------------------------------

    def to_dense_logical(self) -> np.ndarray:
        """Dense (n x appended) image of the logical matrix; test oracle hook."""
        out = np.zeros((self.n, self._cols), dtype=self._val.dtype)
        for j in range(self._cols):
            sec, val = self.column_view(j)
            out[self.logical_of_phys(sec), j] = val
        return out
