"""Belief propagation on site-grouped tensor networks.

A ``SiteNetwork`` assigns every tensor to exactly one site.  A label shared
by tensors on two different sites is a bond of the site graph; all labels
shared by the same site pair are fused into one message.  A label appearing
twice within a single site is internal and is contracted away locally.  A
label appearing once anywhere is dangling; BP requires none.

Doubled (2-norm) networks follow a star convention: ``doubled_sites`` adds
to each site the complex conjugate of its tensors with every internal label
``l`` renamed ``l*``, while designated outer (dangling) labels keep their
name so the conjugate copy traces them against the original.  Messages in
two-norm mode then factor as Hermitian PSD matrices over the (ket, bra)
label split and are symmetrized after every update.

Messages update synchronously (Jacobi): each round computes every new
message from the previous round only, as the contraction of the source
site's tensors with all incoming messages except the one on the target
bond, normalized to unit 1-norm.  The round-to-round change of a message is
the 1-norm of the difference, and iteration stops when the largest change
drops below the tolerance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .tensor import Tensor, contract, eigh_psd, svd_rank

__all__ = [
    "SiteNetwork",
    "MessageSet",
    "DegenerateBondError",
    "bp_iterate",
    "l1bp_value",
    "compress_bond",
    "doubled_sites",
]

DEFAULT_TOL = 5e-6
DEFAULT_MAX_ITER = 256


class DegenerateBondError(RuntimeError):
    """A bond's message pair contracts to zero, breaking the Bethe ratio."""


def star(label: str) -> str:
    return label + "*"


def is_starred(label: str) -> bool:
    return label.endswith("*")


def doubled_sites(
    sites: Mapping[Any, Sequence[Tensor]], outer: Sequence[str] = ()
) -> dict[Any, list[Tensor]]:
    """Sandwich a ket-layer network with its conjugate (star convention).

    Labels in ``outer`` keep their name on the conjugate copy, tracing them
    between the two layers; every other label gets a ``*`` suffix.
    """
    outer = set(outer)
    doubled = {}
    for site, tensors in sites.items():
        bras = [
            t.conj().relabel({l: star(l) for l in t.inds if l not in outer})
            for t in tensors
        ]
        doubled[site] = list(tensors) + bras
    return doubled


class SiteNetwork:
    """Tensors grouped by site, with the induced bond graph."""

    def __init__(self, sites: Mapping[Any, Sequence[Tensor]]):
        self.sites: dict[Any, list[Tensor]] = {
            s: list(ts) for s, ts in sites.items()
        }
        owners: dict[str, list[Any]] = {}
        dims: dict[str, int] = {}
        for site, tensors in self.sites.items():
            for t in tensors:
                for k, l in enumerate(t.inds):
                    owners.setdefault(l, []).append(site)
                    d = t.data.shape[k]
                    if dims.setdefault(l, d) != d:
                        raise ValueError(f"label {l!r} has mismatched dimensions")
        self.dims = dims
        self.dangling: tuple[str, ...] = tuple(
            sorted(l for l, o in owners.items() if len(o) == 1)
        )
        edge_labels: dict[tuple[Any, Any], list[str]] = {}
        for l, o in owners.items():
            if len(o) > 2:
                raise ValueError(f"label {l!r} appears {len(o)} times")
            if len(o) == 2 and o[0] != o[1]:
                edge_labels.setdefault(tuple(sorted(o)), []).append(l)
        self.edges: dict[tuple[Any, Any], tuple[str, ...]] = {
            e: tuple(sorted(ls)) for e, ls in sorted(edge_labels.items())
        }
        self._adjacent: dict[Any, list[Any]] = {s: [] for s in self.sites}
        for i, j in self.edges:
            self._adjacent[i].append(j)
            self._adjacent[j].append(i)
        for s in self._adjacent:
            self._adjacent[s].sort()

    def neighbors(self, site: Any) -> list[Any]:
        return self._adjacent[site]

    def bond_labels(self, i: Any, j: Any) -> tuple[str, ...]:
        return self.edges[tuple(sorted((i, j)))]

    def bond_dim(self, i: Any, j: Any) -> int:
        return math.prod(self.dims[l] for l in self.bond_labels(i, j))


@dataclass
class MessageSet:
    """Directed messages keyed by (source, target), plus iteration stats."""

    messages: dict[tuple[Any, Any], Tensor]
    iterations: int = 0
    max_delta: float = math.inf
    converged: bool = False


def _uniform_message(sn: SiteNetwork, labels: tuple[str, ...]) -> Tensor:
    shape = tuple(sn.dims[l] for l in labels)
    data = np.ones(shape, dtype=complex)
    return Tensor(data / data.size, labels)


def _split_ket_bra(labels: Sequence[str]) -> tuple[list[str], list[str]]:
    kets = sorted(l for l in labels if not is_starred(l))
    bras = [star(l) for l in kets]
    if sorted(bras) != sorted(l for l in labels if is_starred(l)):
        raise ValueError(
            f"bond labels {tuple(labels)} do not split into ket/bra star pairs"
        )
    return kets, bras


def _symmetrize(t: Tensor) -> Tensor:
    kets, bras = _split_ket_bra(t.inds)
    ordered = t.transpose_to(tuple(kets) + tuple(bras))
    shape = ordered.data.shape
    d = math.prod(shape[: len(kets)]) if kets else 1
    m = ordered.data.reshape(d, d)
    m = (m + m.conj().T) / 2.0
    return Tensor(m.reshape(shape), ordered.inds)


def _one_norm(t: Tensor) -> float:
    return float(np.sum(np.abs(t.data)))


def bp_iterate(
    sn: SiteNetwork,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    mode: str = "one-norm",
    damping: float = 0.0,
    init: Mapping[tuple[Any, Any], Tensor] | None = None,
) -> MessageSet:
    """Run synchronous BP to a fixed point of the message equations.

    In two-norm mode every message is Hermitian-symmetrized over its
    (ket, bra) split after each update.  Non-convergence within max_iter is
    flagged on the result, not raised.
    """
    if mode not in ("one-norm", "two-norm"):
        raise ValueError(f"unknown mode {mode!r}")
    if sn.dangling:
        raise ValueError(f"network has dangling labels {sn.dangling[:8]}")
    directed = [(i, j) for i, j in sn.edges] + [(j, i) for i, j in sn.edges]
    directed.sort()
    messages: dict[tuple[Any, Any], Tensor] = {}
    for i, j in directed:
        labels = sn.bond_labels(i, j)
        if init is not None and (i, j) in init:
            messages[(i, j)] = init[(i, j)].transpose_to(labels)
        else:
            messages[(i, j)] = _uniform_message(sn, labels)
    ms = MessageSet(messages)
    for it in range(1, max_iter + 1):
        fresh: dict[tuple[Any, Any], Tensor] = {}
        max_delta = 0.0
        for j, k in directed:
            labels = sn.bond_labels(j, k)
            inputs = list(sn.sites[j])
            inputs += [messages[(l, j)] for l in sn.neighbors(j) if l != k]
            new = contract(inputs, output=labels)
            if mode == "two-norm":
                new = _symmetrize(new).transpose_to(labels)
            nrm = _one_norm(new)
            if nrm > 0.0:
                new = Tensor(new.data / nrm, labels)
            if mode == "one-norm":
                # fix the free global phase (largest entry real positive) so
                # a phase-rotating fixed point still registers as converged;
                # the Bethe ratio is invariant under per-message rescaling
                flat = new.data.reshape(-1)
                lead = flat[np.argmax(np.abs(flat))]
                if lead != 0.0:
                    new = Tensor(new.data * (lead.conjugate() / abs(lead)), labels)
            old = messages[(j, k)]
            if damping > 0.0:
                new = Tensor((1.0 - damping) * new.data + damping * old.data, labels)
            max_delta = max(max_delta, _one_norm(Tensor(new.data - old.data, labels)))
            fresh[(j, k)] = new
        messages = fresh
        ms = MessageSet(messages, iterations=it, max_delta=max_delta)
        if max_delta <= tol:
            ms.converged = True
            break
    return ms


def l1bp_value(sn: SiteNetwork, ms: MessageSet) -> complex:
    """Bethe estimate of the network's scalar value from converged messages.

    The value is the product over sites of (site tensors contracted with all
    incoming messages) divided by the product over bonds of the two opposing
    messages contracted together, accumulated in the log domain.  Positive
    rescaling of any message cancels between one numerator and one
    denominator factor, so normalization does not matter.
    """
    if sn.dangling:
        raise ValueError(f"network has dangling labels {sn.dangling[:8]}")
    log_mag = 0.0
    phase = 1.0 + 0.0j
    for site in sorted(sn.sites):
        inputs = list(sn.sites[site])
        inputs += [ms.messages[(l, site)] for l in sn.neighbors(site)]
        z = contract(inputs, output=()).item()
        if z == 0.0:
            return 0.0j
        log_mag += math.log(abs(z))
        phase *= z / abs(z)
    for i, j in sn.edges:
        z = contract([ms.messages[(i, j)], ms.messages[(j, i)]], output=()).item()
        if z == 0.0:
            raise DegenerateBondError(
                f"messages on bond {sn.edges[(i, j)]} between sites {i} and {j} "
                "contract to zero"
            )
        log_mag -= math.log(abs(z))
        phase /= z / abs(z)
    return phase * math.exp(log_mag)


ZERO_CUT = 1e-12


def _psd_root(m: np.ndarray) -> np.ndarray:
    """Factor a Hermitian PSD matrix as R†R with R = sqrt(lam) W†."""
    lam, w, _ = eigh_psd((m + m.conj().T) / 2.0)
    lam = np.where(lam >= ZERO_CUT * max(lam[0], 0.0), lam, 0.0) if len(lam) else lam
    return np.sqrt(lam)[:, None] * w.conj().T


def compress_bond(
    m_ij: Tensor,
    m_ji: Tensor,
    chi: int | None,
    kappa: float,
    new_label: str = "_c",
) -> tuple[Tensor, Tensor, float]:
    """Oblique projector pair for one bond from its two 2-norm messages.

    Both messages are Hermitian PSD over the bond's fused (ket, bra) split.
    Matrixized with bra labels as rows, a message is the bond Gram matrix
    G = A†A of its side's subnetwork A (rows of the doubled network trace
    conj(A) against A), which is what the factorization below needs.
    With ``m_ij = W_A lam_A W_A†`` set ``R_A = sqrt(lam_A) W_A†`` and with
    ``m_ji = W_B lam_B W_B†`` set ``R_B = (sqrt(lam_B) W_B†)^T``; truncate
    the SVD ``R_A R_B ~= U s V†`` to rank ``min(chi, kappa rule)`` and return

        P_A = R_B V s^(-1/2)   (ket labels..., new_label)
        P_B = s^(-1/2) U† R_A  (new_label, ket labels...)

    P_A contracts into the message-source site's ket bond axes and P_B into
    the target site's; at full rank P_A·P_B is the identity.  Singular
    values below 1e-12 of the largest are treated as zero (pseudo-inverse).
    Returns the projectors and the discarded fraction of the squared
    spectrum.  A dead bond (zero-rank messages) yields dimension-0
    projectors and a warning.
    """
    kets, bras = _split_ket_bra(m_ij.inds)
    if sorted(m_ji.inds) != sorted(m_ij.inds):
        raise ValueError("opposing messages cover different labels")
    ket_dims = tuple(m_ij.dim(l) for l in kets)
    r_a = _psd_root(m_ij.to_matrix(bras, kets))
    r_b = _psd_root(m_ji.to_matrix(bras, kets)).T
    c = r_a @ r_b
    u, s, vh = np.linalg.svd(c, full_matrices=False)
    alive = int(np.sum(s >= ZERO_CUT * s[0])) if len(s) and s[0] > 0.0 else 0
    if alive == 0:
        warnings.warn("bond is dead (zero-rank messages); compressing to rank 0")
        r = 0
    else:
        r = min(svd_rank(s, chi, kappa), alive)
    total2 = float(np.sum(s * s))
    dw = float(np.sum(s[r:] ** 2) / total2) if total2 > 0.0 else 0.0
    inv_root = s[:r] ** -0.5 if r else s[:0]
    p_a = r_b @ (vh[:r].conj().T * inv_root[None, :])
    p_b = (inv_root[:, None] * u[:, :r].conj().T) @ r_a
    p_a_t = Tensor(p_a.reshape(ket_dims + (r,)), tuple(kets) + (new_label,))
    p_b_t = Tensor(p_b.reshape((r,) + ket_dims), (new_label,) + tuple(kets))
    return p_a_t, p_b_t, dw
