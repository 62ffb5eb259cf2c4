"""Exact minimum-cost assignment with an equal-share (balanced) variant.

The balanced problem: given an N x K cost matrix with N divisible by K,
assign each of the N samples to exactly one of the K decoders so that every
decoder receives exactly N/K samples and the summed cost is minimal.  It is
equivalent to an N x N assignment problem in which each decoder column is
repeated N/K times; ``balanced_assign_by_duplication`` realizes that
construction literally, while ``balanced_assign`` solves the same program
with successive shortest paths over the K column groups (same optimum, far
less work when N >> K).

All solvers are deterministic.  Rows are processed in index order and every
tie at a choice point goes to the lowest column (or column-group) index, so
degenerate inputs resolve predictably: a constant square matrix maps to the
identity permutation, and duplicated balanced columns fill in index order.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]

__all__ = [
    "hungarian_min_cost",
    "balanced_assign",
    "balanced_assign_by_duplication",
    "brute_force_assign",
    "duplicated_cost_matrix",
    "assignment_total",
    "read_cost_file",
    "write_assignment_file",
    "solve_cost_file",
]


def _check_cost(cost: object, name: str = "cost") -> FloatArray:
    a = np.asarray(cost, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} entries must all be finite")
    return a


def hungarian_min_cost(cost: object) -> IntArray:
    """Solve the square assignment problem exactly.

    Shortest-augmenting-path implementation with dual potentials, O(n^3).
    Rows are inserted in index order and every minimum inside an
    augmentation is taken at the lowest column index, which fixes a
    deterministic result on tied inputs (e.g. a constant matrix yields the
    identity permutation).

    Args:
      cost: square n x n matrix of finite costs.

    Returns:
      Integer array ``perm`` of length n where row i is assigned to column
      ``perm[i]`` and ``sum(cost[i, perm[i]])`` is minimal.

    Raises:
      ValueError: if the matrix is not square or has non-finite entries.
    """
    a = _check_cost(cost)
    n, m = a.shape
    if n != m:
        raise ValueError(f"cost matrix must be square, got shape {a.shape}")
    if n == 0:
        return np.zeros(0, dtype=np.int64)

    # Column n is a virtual start column holding the row being inserted.
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of = np.full(n + 1, -1, dtype=np.int64)
    way = np.full(n, n, dtype=np.int64)

    for i in range(n):
        row_of[n] = i
        j0 = n
        minv = np.full(n, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of[j0]
            free = np.flatnonzero(~used[:n])
            cur = a[i0, free] - u[i0] - v[free]
            better = cur < minv[free]  # strict: keep the earlier tree edge on ties
            hit = free[better]
            minv[hit] = cur[better]
            way[hit] = j0
            j1 = free[np.argmin(minv[free])]  # first minimum = lowest column index
            delta = minv[j1]
            tree = np.flatnonzero(used)
            u[row_of[tree]] += delta
            v[tree] -= delta
            minv[~used[:n]] -= delta
            j0 = j1
            if row_of[j0] < 0:
                break
        while j0 != n:
            j1 = way[j0]
            row_of[j0] = row_of[j1]
            j0 = j1

    perm = np.empty(n, dtype=np.int64)
    perm[row_of[:n]] = np.arange(n)
    return perm


def _check_balanced(cost: object) -> tuple[FloatArray, int, int, int]:
    a = _check_cost(cost)
    n, k = a.shape
    if k < 1:
        raise ValueError("need at least one decoder column")
    if n % k != 0:
        raise ValueError(
            f"quota violated: {n} samples not divisible by {k} decoders"
        )
    return a, n, k, n // k


def duplicated_cost_matrix(cost: object) -> FloatArray:
    """Expand an N x K balanced cost matrix to the equivalent N x N one.

    Decoder column k occupies the q = N/K consecutive columns
    ``k*q .. k*q + q - 1``; a column index j of the expanded matrix maps
    back to decoder ``j // q``.
    """
    a, _, _, q = _check_balanced(cost)
    return np.repeat(a, q, axis=1)


def balanced_assign_by_duplication(cost: object) -> IntArray:
    """Balanced assignment via the literal column-duplication reduction.

    Builds the duplicated N x N matrix, runs ``hungarian_min_cost`` and
    collapses copy indices back to decoder indices.  Reference construction;
    ``balanced_assign`` returns the same objective without the N x N blowup.
    """
    a, _, _, q = _check_balanced(cost)
    perm = hungarian_min_cost(np.repeat(a, q, axis=1))
    return perm // q


def balanced_assign(cost: object) -> IntArray:
    """Assign N samples to K decoders, exactly N/K per decoder, at min cost.

    Successive shortest augmenting paths over the K column groups of the
    duplicated-column program.  Rows enter in index order; a row whose
    cheapest group still has spare capacity takes it directly (optimal by a
    per-row lower bound), otherwise the cheapest chain of reassignments
    ending at a group with spare capacity is applied, lowest group index on
    ties.  The objective always equals the brute-force optimum.

    Args:
      cost: N x K matrix of finite costs, N divisible by K.

    Returns:
      Integer array ``assignee`` of length N with values in [0, K); every
      value occurs exactly N/K times.

    Raises:
      ValueError: on non-finite entries or when N is not divisible by K.
    """
    a, n, k, q = _check_balanced(cost)
    if k == 1:
        return np.zeros(n, dtype=np.int64)

    assignee = np.full(n, -1, dtype=np.int64)
    load = np.zeros(k, dtype=np.int64)
    members: list[list[int]] = [[] for _ in range(k)]
    # edge[g, h]: cheapest cost of moving one row out of group g into h;
    # edge_row[g, h]: which row moves (lowest row index on ties).  Rebuilt
    # lazily: stale groups are refreshed just before a chain search.
    edge = np.full((k, k), np.inf)
    edge_row = np.full((k, k), -1, dtype=np.int64)
    stale = np.ones(k, dtype=bool)

    # Greedy prefix: while each row's cheapest group still has capacity the
    # direct assignment matches the per-row lower bound, hence is optimal.
    favorite = np.argmin(a, axis=1)
    rank = np.cumsum(np.eye(k, dtype=np.int64)[favorite], axis=0)[
        np.arange(n), favorite
    ]
    blocked = rank > q
    start = int(np.argmax(blocked)) if blocked.any() else n
    for i in range(start):
        g = int(favorite[i])
        assignee[i] = g
        load[g] += 1
        members[g].append(i)

    def add_row(r: int, g: int) -> None:
        assignee[r] = g
        load[g] += 1
        members[g].append(r)
        if stale[g]:
            return
        delta = a[r] - a[r, g]
        take = delta < edge[g]
        edge[g, take] = delta[take]
        edge_row[g, take] = r
        tie = (delta == edge[g]) & (edge_row[g] > r)
        edge_row[g, tie] = r

    def rebuild_group(g: int) -> None:
        stale[g] = False
        rows = members[g]
        if not rows:
            edge[g] = np.inf
            edge_row[g] = -1
            return
        rows.sort()
        idx = np.asarray(rows, dtype=np.int64)
        delta = a[idx] - a[idx, g][:, None]
        best = np.argmin(delta, axis=0)  # first occurrence = lowest row index
        edge[g] = delta[best, np.arange(k)]
        edge_row[g] = idx[best]

    for i in range(start, n):
        g = int(favorite[i])
        if load[g] < q:
            add_row(i, g)
            continue
        for gg in np.flatnonzero(stale):
            rebuild_group(int(gg))
        dist = a[i].copy()
        pred = np.full(k, -1, dtype=np.int64)  # -1: row i enters the group directly
        for _ in range(k - 1):
            via = dist[:, None] + edge
            src = np.argmin(via, axis=0)
            val = via[src, np.arange(k)]
            improve = val < dist
            if not improve.any():
                break
            dist[improve] = val[improve]
            pred[improve] = src[improve]
        open_groups = np.flatnonzero(load < q)
        target = open_groups[np.argmin(dist[open_groups])]

        moves: list[tuple[int, int, int]] = []  # (row, from_group, to_group)
        g = int(target)
        while pred[g] >= 0:
            src_g = int(pred[g])
            moves.append((int(edge_row[src_g, g]), src_g, g))
            g = src_g
        for r, src_g, dst_g in moves:
            members[src_g].remove(r)
            load[src_g] -= 1
            stale[src_g] = True
            add_row(r, dst_g)
        add_row(i, g)

    return assignee


def brute_force_assign(cost: object) -> IntArray:
    """Globally optimal balanced assignment by exhaustive enumeration.

    Test oracle only.  Enumerates assignee vectors in lexicographic order
    with quota bookkeeping and keeps the first optimum found, so ties
    resolve exactly as documented for ``balanced_assign``.

    Raises:
      ValueError: if N > 10 (enumeration would blow up) or quota fails.
    """
    a, n, k, q = _check_balanced(cost)
    if n > 10:
        raise ValueError(f"brute force capped at N <= 10, got N={n}")

    remaining = [q] * k
    assignee = np.zeros(n, dtype=np.int64)
    best_vec = np.zeros(n, dtype=np.int64)
    best = np.inf
    # bound[pos]: sum of per-row minima from row pos on; admissible even
    # with negative costs, and pruning ">= best" keeps the first (lex-least)
    # optimum because DFS visits assignee vectors in lexicographic order.
    bound = np.zeros(n + 1)
    bound[:n] = np.min(a, axis=1)[::-1].cumsum()[::-1]

    def descend(pos: int, total: float) -> None:
        nonlocal best
        if pos == n:
            if total < best:
                best = total
                best_vec[:] = assignee
            return
        if total + bound[pos] >= best:
            return
        for g in range(k):
            if remaining[g] == 0:
                continue
            remaining[g] -= 1
            assignee[pos] = g
            descend(pos + 1, total + a[pos, g])
            remaining[g] += 1

    descend(0, 0.0)
    return best_vec


def assignment_total(cost: object, assignee: object) -> float:
    """Summed cost of an assignment (works for N x K or square matrices)."""
    a = np.asarray(cost, dtype=np.float64)
    idx = np.asarray(assignee, dtype=np.int64)
    return float(a[np.arange(len(idx)), idx].sum())


def read_cost_file(path: str) -> FloatArray:
    """Read a cost matrix from text: first line ``N K``, then N rows of K reals."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"expected header 'N K', got {header!r}")
        n, k = int(header[0]), int(header[1])
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            vals = [float(x) for x in line.split()]
            if len(vals) != k:
                raise ValueError(f"expected {k} costs per row, got {len(vals)}")
            rows.append(vals)
    if len(rows) != n:
        raise ValueError(f"expected {n} rows, got {len(rows)}")
    out = np.asarray(rows, dtype=np.float64).reshape(n, k)
    return out


def write_assignment_file(path: str, assignee: object) -> None:
    """Write one ``sample_index decoder_index`` pair per line."""
    idx = np.asarray(assignee, dtype=np.int64)
    with open(path, "w", encoding="utf-8") as fh:
        for i, g in enumerate(idx):
            fh.write(f"{i} {int(g)}\n")


def solve_cost_file(cost_path: str, out_path: str) -> IntArray:
    """Standalone mode: read a cost file, balance-assign, write the result."""
    assignee = balanced_assign(read_cost_file(cost_path))
    write_assignment_file(out_path, assignee)
    return assignee
