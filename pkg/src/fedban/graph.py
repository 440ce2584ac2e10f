"""Communication graphs, consensus mixing matrices and their spectra.

``P = I - (kappa / d_max) * L`` with ``L = D - A`` the graph Laplacian. The
eigenpairs of the (symmetric) ``P`` feed two topology constants:

``c0``  bounds how far an agent's mixed play count can drift from the network
        average;
``ci``  (one per agent) inflates the variance of the mixed reward estimate.

The per-agent weights ``a_pk(i)`` used by ``ci`` are computed with
``nu_plus = sum_d u_p[d] u_k[d] 1(u_p[d] u_k[d] >= 0)`` (and ``nu_minus``
likewise with ``<= 0``), and ``(u_p u_k^T)_ii`` as the entry tested and
multiplied in both same-sign branches. With that reading every branch is
non-negative and invariant to eigenvector sign flips.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, GraphValidationError, SpectralGapError

TOPOLOGIES = ("cycle", "complete", "star", "path", "custom")


@dataclass(frozen=True)
class Graph:
    adjacency: np.ndarray

    @property
    def M(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def laplacian(self) -> np.ndarray:
        A = self.adjacency.astype(float)
        return np.diag(A.sum(axis=1)) - A


def _is_connected(A: np.ndarray) -> bool:
    M = A.shape[0]
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(A[u]):
            if v not in seen:
                seen.add(int(v))
                queue.append(int(v))
    return len(seen) == M


def validate_adjacency(adjacency) -> np.ndarray:
    A = np.asarray(adjacency).astype(bool)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise GraphValidationError(f"adjacency must be square, got shape {A.shape}")
    if not np.array_equal(A, A.T):
        raise GraphValidationError("adjacency must be symmetric")
    if A.diagonal().any():
        raise GraphValidationError("adjacency must have an empty diagonal")
    if A.shape[0] > 1:
        if (A.sum(axis=1) == 0).any():
            raise GraphValidationError("graph has an isolated node")
        if not _is_connected(A):
            raise GraphValidationError("graph is disconnected")
    return A


def build_graph(topology: str, M: int, adjacency=None) -> Graph:
    """Build one of the named topologies on ``M`` agents.

    A single agent (``M == 1``) is accepted for ``complete`` and yields the
    trivial graph whose mixing matrix is ``[[1]]``.
    """
    if topology not in TOPOLOGIES:
        raise ConfigError(f"unknown topology {topology!r}; choose from {TOPOLOGIES}")
    if topology == "custom":
        if adjacency is None:
            raise ConfigError("custom topology needs an adjacency matrix")
        A = validate_adjacency(adjacency)
        if A.shape[0] < 2:
            raise GraphValidationError("custom graph needs at least 2 agents")
        return Graph(A)
    if M < 1 or (M == 1 and topology != "complete"):
        raise ConfigError(f"{topology} graph needs M >= 2, got {M}")
    A = np.zeros((M, M), dtype=bool)
    if topology == "cycle":
        if M < 3:
            raise ConfigError(f"cycle graph needs M >= 3, got {M}")
        i = np.arange(M)
        A[i, (i + 1) % M] = A[(i + 1) % M, i] = True
    elif topology == "complete":
        A[:] = True
        np.fill_diagonal(A, False)
    elif topology == "star":
        A[0, 1:] = A[1:, 0] = True
    elif topology == "path":
        i = np.arange(M - 1)
        A[i, i + 1] = A[i + 1, i] = True
    return Graph(validate_adjacency(A))


def read_edge_list(path) -> Graph:
    """Read ``M`` on the first line, then one ``u v`` pair (0-indexed) per line."""
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise GraphValidationError(f"{path}: empty edge list")
    try:
        M = int(lines[0])
    except ValueError:
        raise GraphValidationError(f"{path}: first line must be the agent count") from None
    A = np.zeros((M, M), dtype=bool)
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) != 2:
            raise GraphValidationError(f"{path}:{lineno}: expected 'u v', got {ln!r}")
        u, v = int(parts[0]), int(parts[1])
        if not (0 <= u < M and 0 <= v < M) or u == v:
            raise GraphValidationError(f"{path}:{lineno}: bad edge ({u}, {v})")
        A[u, v] = A[v, u] = True
    return build_graph("custom", M, adjacency=A)


def jacobi_eigh(A, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, V)`` with eigenvalues sorted in descending order and
    orthonormal eigenvectors in the columns of ``V``. Iteration stops once
    every off-diagonal entry is below ``tol`` times the Frobenius norm.
    """
    a = np.array(A, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, atol=1e-14, rtol=0):
        raise ValueError("jacobi_eigh needs a square symmetric matrix")
    a = 0.5 * (a + a.T)
    V = np.eye(n)
    scale = max(np.linalg.norm(a), 1.0)
    for _ in range(max_sweeps):
        off = np.abs(a - np.diag(np.diag(a))).max() if n > 1 else 0.0
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp = V[:, p].copy()
                V[:, p] = c * vp - s * V[:, q]
                V[:, q] = s * vp + c * V[:, q]
    else:
        raise ArithmeticError(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def _pair_weights(U: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """``a[p, k, i]`` for all eigenvector pairs and agents."""
    prod = U.T[:, None, :] * U.T[None, :, :]          # [p, k, d] = u_p[d] u_k[d]
    nu_plus = np.where(prod >= 0, prod, 0.0).sum(axis=-1)
    nu_minus = np.where(prod <= 0, prod, 0.0).sum(axis=-1)
    same_sign = (lam[:, None] * lam[None, :] >= 0)[:, :, None]
    e = prod                                           # [p, k, i] = (u_p u_k^T)_ii
    a_same = np.where(e >= 0, nu_plus[:, :, None] * e, nu_minus[:, :, None] * e)
    a_mixed = np.maximum(np.abs(nu_minus), nu_plus)[:, :, None]
    return np.where(same_sign, a_same, np.broadcast_to(a_mixed, a_same.shape))


def spectral_constants(eigenvalues, eigenvectors):
    """Return ``(c0, ci)`` from the descending eigenpairs of a mixing matrix."""
    lam = np.asarray(eigenvalues, dtype=float)
    U = np.asarray(eigenvectors, dtype=float)
    M = lam.size
    if M == 1:
        return 0.0, np.zeros(1)
    mag = np.abs(lam)
    if np.any(mag[1:] >= 1.0 - 1e-12):
        raise SpectralGapError(
            f"|lambda_p| >= 1 for some p >= 2 (max {mag[1:].max():.12g}); "
            "the graph is disconnected or bipartite at this step size, use a smaller kappa")
    c0 = math.sqrt(M) * float(np.sum(mag[1:] / (1.0 - mag[1:])))
    prod = mag[:, None] * mag[None, 1:]                # p over all, k from 2
    geo = prod / (1.0 - prod)
    a = _pair_weights(U, lam)[:, 1:, :]
    ci = M * np.einsum("pk,pki->i", geo, a)
    return c0, ci


@dataclass(frozen=True)
class MixingMatrix:
    P: np.ndarray
    kappa: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    c0: float
    ci: np.ndarray

    @property
    def M(self) -> int:
        return self.P.shape[0]

    def summary(self) -> dict:
        return {
            "M": self.M,
            "kappa": self.kappa,
            "row_sums": self.P.sum(axis=1).tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "c0": self.c0,
            "ci": self.ci.tolist(),
        }


def mixing_matrix(g: Graph, kappa: float = 0.5) -> MixingMatrix:
    if not (0.0 < kappa <= 1.0):
        raise ConfigError(f"kappa must lie in (0, 1], got {kappa!r}")
    M = g.M
    d_max = int(g.degrees.max()) if M > 1 else 0
    if d_max == 0:
        P = np.eye(M)
    else:
        P = np.eye(M) - (kappa / d_max) * g.laplacian()
    w, V = jacobi_eigh(P)
    # u_1 is the constant vector; fix its sign
    if V[:, 0].sum() < 0:
        V[:, 0] = -V[:, 0]
    c0, ci = spectral_constants(w, V)
    for arr in (P, w, V, ci):
        arr.setflags(write=False)
    return MixingMatrix(P=P, kappa=float(kappa), eigenvalues=w, eigenvectors=V, c0=c0, ci=ci)


def consensus_distance(P: np.ndarray, t: int) -> float:
    """Induced infinity norm of ``P^t - (1/M) 1 1^T``."""
    M = P.shape[0]
    Pt = np.linalg.matrix_power(P, t)
    return float(np.abs(Pt - np.full((M, M), 1.0 / M)).sum(axis=1).max())
