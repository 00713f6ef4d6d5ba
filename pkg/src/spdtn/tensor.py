"""Dense labeled tensors, greedy contraction, and truncated factorizations.

A ``Tensor`` is an ndarray plus one string label per axis.  ``contract``
follows einsum semantics over a list of tensors: labels shared by two
tensors are summed unless kept in the output, a label repeated within one
tensor is traced (or reduced to its diagonal if still needed), and labels
absent from the output are summed out.  Hyperedges (one label on three or
more tensors) are rejected.

Contraction order comes from a greedy pairwise path: repeatedly contract
the pair sharing at least one label whose result is smallest (ties broken
by fewer multiply-adds).  A path is a list of position pairs (i, j) into
the current tensor list; each step removes both operands and appends the
result at the end, like the einsum-path convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "CapacityError",
    "contract",
    "greedy_path",
    "truncated_svd",
    "svd_rank",
    "eigh_psd",
]


class CapacityError(RuntimeError):
    """A contraction or simulation step exceeded its configured budget."""


@dataclass(frozen=True)
class Tensor:
    data: np.ndarray
    inds: tuple[str, ...]

    def __post_init__(self):
        data = np.asarray(self.data)
        inds = tuple(self.inds)
        if data.ndim != len(inds):
            raise ValueError(f"{data.ndim} axes but {len(inds)} labels {inds}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "inds", inds)

    def dim(self, label: str) -> int:
        return self.data.shape[self.inds.index(label)]

    def relabel(self, mapping: Mapping[str, str]) -> "Tensor":
        return Tensor(self.data, tuple(mapping.get(l, l) for l in self.inds))

    def conj(self) -> "Tensor":
        return Tensor(self.data.conj(), self.inds)

    def transpose_to(self, inds: Sequence[str]) -> "Tensor":
        inds = tuple(inds)
        if sorted(inds) != sorted(self.inds):
            raise ValueError(f"cannot transpose {self.inds} to {inds}")
        perm = [self.inds.index(l) for l in inds]
        return Tensor(self.data.transpose(perm), inds)

    def to_matrix(self, rows: Sequence[str], cols: Sequence[str]) -> np.ndarray:
        """Fuse the row labels and column labels into one matrix."""
        t = self.transpose_to(tuple(rows) + tuple(cols))
        rdim = math.prod(t.data.shape[: len(rows)]) if rows else 1
        return t.data.reshape(rdim, -1)

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> complex:
        if self.data.ndim != 0:
            raise ValueError(f"tensor with labels {self.inds} is not a scalar")
        return complex(self.data)


def _letters(labels: Iterable[str]) -> dict[str, str]:
    import string

    pool = string.ascii_letters
    table = {}
    for l in labels:
        if l not in table:
            if len(table) >= len(pool):
                raise CapacityError("too many distinct labels for one reduction")
            table[l] = pool[len(table)]
    return table


def _reduce_tensor(t: Tensor, needed: set[str]) -> Tensor:
    """Trace repeated labels and sum out labels nobody else needs."""
    repeated = {l for l in t.inds if t.inds.count(l) > 1}
    drop = {l for l in set(t.inds) if l not in needed}
    if not repeated and not drop:
        return t
    table = _letters(t.inds)
    out_labels = []
    for l in t.inds:
        if l in out_labels or l in drop:
            continue
        out_labels.append(l)
    expr = "".join(table[l] for l in t.inds) + "->" + "".join(table[l] for l in out_labels)
    return Tensor(np.einsum(expr, t.data), tuple(out_labels))


def _pair_sum_labels(a: Tensor, b: Tensor, needed_outside: set[str]) -> list[str]:
    shared = [l for l in a.inds if l in b.inds]
    keep = [l for l in shared if l in needed_outside]
    if keep:
        raise ValueError(
            f"labels {keep} are shared by the contracting pair but still needed"
        )
    return shared


def _pair_contract(a: Tensor, b: Tensor, needed_outside: set[str]) -> Tensor:
    summed = _pair_sum_labels(a, b, needed_outside)
    ax_a = [a.inds.index(l) for l in summed]
    ax_b = [b.inds.index(l) for l in summed]
    data = np.tensordot(a.data, b.data, axes=(ax_a, ax_b))
    inds = tuple(l for l in a.inds if l not in summed) + tuple(
        l for l in b.inds if l not in summed
    )
    return Tensor(data, inds)


def greedy_path(
    tensors: Sequence[Tensor],
    output: Sequence[str] = (),
    budget: int | None = None,
) -> list[tuple[int, int]]:
    """Greedy pairwise contraction order (einsum-path position convention).

    Minimizes the size of each intermediate, breaking ties by multiply-add
    count; with a budget, raises CapacityError naming the first offending
    intermediate.
    """
    live: list[dict[str, int]] = [
        {l: t.data.shape[k] for k, l in enumerate(t.inds)} for t in tensors
    ]
    output = set(output)
    path: list[tuple[int, int]] = []
    while len(live) > 1:
        best = None
        for i in range(len(live)):
            for j in range(i + 1, len(live)):
                shared = set(live[i]) & set(live[j])
                if not shared:
                    continue
                outside = output.union(
                    *(set(live[k]) for k in range(len(live)) if k not in (i, j))
                )
                kept = {
                    l: d
                    for part in (live[i], live[j])
                    for l, d in part.items()
                    if l in outside or l not in shared
                }
                size = math.prod(kept.values()) if kept else 1
                union = dict(live[i])
                union.update(live[j])
                flops = math.prod(union.values()) if union else 1
                cand = (size, flops, i, j, kept)
                if best is None or cand[:2] < best[:2]:
                    best = cand
        if best is None:
            # only disconnected pieces remain: outer-product the smallest two
            sizes = sorted(
                range(len(live)), key=lambda k: math.prod(live[k].values()) if live[k] else 1
            )
            i, j = sorted(sizes[:2])
            kept = dict(live[i])
            kept.update(live[j])
            size = math.prod(kept.values()) if kept else 1
            best = (size, size, i, j, kept)
        size, _, i, j, kept = best
        if budget is not None and size > budget:
            raise CapacityError(
                f"intermediate over labels {sorted(kept)} has {size} elements, "
                f"budget is {budget}"
            )
        path.append((i, j))
        del live[j], live[i]
        live.append(kept)
    return path


def contract(
    tensors: Sequence[Tensor],
    output: Sequence[str] = (),
    path: Sequence[tuple[int, int]] | None = None,
) -> Tensor:
    """Contract a tensor list down to the given output labels."""
    output = tuple(output)
    if not tensors:
        if output:
            raise ValueError(f"no tensors supply output labels {output}")
        return Tensor(np.asarray(1.0 + 0.0j), ())
    counts: dict[str, int] = {}
    for t in tensors:
        for l in t.inds:
            counts[l] = counts.get(l, 0) + 1
    for l in output:
        if l not in counts:
            raise ValueError(f"output label {l!r} absent from the network")
        if output.count(l) > 1:
            raise ValueError(f"output label {l!r} repeated")
    for l, c in counts.items():
        if c > 2:
            raise ValueError(f"label {l!r} appears {c} times (hyperedges unsupported)")

    live = []
    for t in tensors:
        needed = set(output) | {l for l in t.inds if counts[l] > t.inds.count(l)}
        live.append(_reduce_tensor(t, needed))
    if path is None:
        path = greedy_path(live, output)
    for i, j in path:
        needed_outside = set(output).union(
            *(set(live[k].inds) for k in range(len(live)) if k not in (i, j))
        )
        merged = _pair_contract(live[i], live[j], needed_outside)
        del live[j], live[i]
        live.append(merged)
    result = live[0]
    for extra in live[1:]:
        result = _pair_contract(result, extra, set(output))
    # sum out anything not requested (einsum semantics for dangling labels)
    result = _reduce_tensor(result, set(output))
    return result.transpose_to(output)


def svd_rank(s: np.ndarray, chi: int | None, kappa: float) -> int:
    """Smallest kept rank whose discarded spectral tail obeys the kappa rule:
    sum of discarded squares <= kappa^2 * total squares (relative Frobenius
    error <= kappa); then the chi cap, and at least rank 1."""
    total2 = float(np.sum(s * s))
    r = len(s)
    if total2 > 0.0:
        tail2 = np.concatenate([np.cumsum((s * s)[::-1])[::-1], [0.0]])
        allowed = kappa * kappa * total2
        while r > 1 and tail2[r - 1] <= allowed:
            r -= 1
    else:
        r = 1
    if chi is not None:
        r = min(r, max(1, chi))
    return max(1, r)


def truncated_svd(
    t: Tensor,
    left: Sequence[str],
    chi: int | None = None,
    kappa: float = 0.0,
    new_label: str = "_svd",
) -> tuple[Tensor, np.ndarray, Tensor, float]:
    """SVD split keeping rank ``min(chi, kappa rule)``.

    Returns (U, s, Vh, discarded_weight) with U over ``left + (new_label,)``,
    Vh over ``(new_label,) + right`` and discarded_weight the discarded
    fraction of the squared spectrum.
    """
    left = tuple(left)
    right = tuple(l for l in t.inds if l not in left)
    if sorted(left + right) != sorted(t.inds) or len(left) + len(right) != len(t.inds):
        raise ValueError(f"bad left labels {left} for tensor over {t.inds}")
    mat = t.to_matrix(left, right)
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    r = svd_rank(s, chi, kappa)
    total2 = float(np.sum(s * s))
    dw = float(np.sum(s[r:] ** 2) / total2) if total2 > 0 else 0.0
    ldims = tuple(t.dim(l) for l in left)
    rdims = tuple(t.dim(l) for l in right)
    u_t = Tensor(u[:, :r].reshape(ldims + (r,)), left + (new_label,))
    vh_t = Tensor(vh[:r].reshape((r,) + rdims), (new_label,) + right)
    return u_t, s[:r].copy(), vh_t, dw


def eigh_psd(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Hermitian eigendecomposition for nominally PSD matrices.

    Returns eigenvalues in descending order with negatives clamped to zero,
    the matching eigenvectors (columns), and the clamped relative mass
    ``|sum of negative eigenvalues| / max eigenvalue`` as a diagnostic.
    """
    vals, vecs = np.linalg.eigh(mat)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    neg = float(-np.sum(vals[vals < 0.0]))
    top = float(vals[0]) if len(vals) and vals[0] > 0 else 0.0
    clamped = np.clip(vals, 0.0, None)
    return clamped, vecs, (neg / top if top > 0 else (0.0 if neg == 0.0 else np.inf))
