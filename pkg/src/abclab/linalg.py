"""Sparse symmetric factorization and a shift-invert Lanczos eigensolver."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrixError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    pass


def as_symmetric(A, tol: float = 1e-12):
    """CSC copy of A after checking structural and numerical symmetry."""
    A = sp.csc_matrix(A, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    D = A - A.T
    if D.nnz and abs(D).max() > tol * max(abs(A).max(), 1e-300):
        raise ValueError("matrix is not symmetric")
    if A.nnz and not np.all(np.isfinite(A.data)):
        raise ValueError("matrix has non-finite entries")
    return A


class Factorization:
    """Sparse LU with a symmetric ordering and diagonal pivots.

    With identical row and column permutations the factorization is
    P A P^T = L U with U = D L^T, so the signs of diag(U) give the inertia by
    Sylvester's law.
    """

    def __init__(self, A):
        A = as_symmetric(A)
        self.n = A.shape[0]
        try:
            self._lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                 options=dict(SymmetricMode=True))
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from exc
        d = self._lu.U.diagonal()
        scale = max(abs(d).max(), 1e-300)
        if np.any(np.abs(d) <= 1e-14 * scale) or not np.all(np.isfinite(d)):
            raise SingularMatrixError("matrix is numerically singular")
        self._symmetric = bool(np.array_equal(self._lu.perm_r, self._lu.perm_c))
        self._d = d

    def solve(self, b):
        return self._lu.solve(np.asarray(b, dtype=float))

    @property
    def inertia(self):
        """(positive, negative, zero) eigenvalue counts."""
        if not self._symmetric:
            raise RuntimeError("pivoting broke the symmetric ordering; inertia unavailable")
        return int(np.sum(self._d > 0)), int(np.sum(self._d < 0)), 0


def factorize(A) -> Factorization:
    return Factorization(A)


@dataclass(frozen=True)
class EigenRequest:
    sigma: float = 0.0
    nev: int = 1
    tol: float = 1e-10
    max_iter: int = 600
    seed: int = 12345

    def __post_init__(self):
        if self.nev < 1 or self.tol <= 0:
            raise ValueError("need nev >= 1 and tol > 0")


@dataclass
class EigenPair:
    value: float
    vector: np.ndarray
    residual: float


@dataclass
class EigenResult:
    pairs: list
    sigma: float
    nudged: bool
    iterations: int
    below_shift: int

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    @property
    def values(self):
        return np.array([p.value for p in self.pairs])


def _residuals(K, M, lam, X, sigma=0.0):
    """Backward error ||K x - lam M x|| / (||K x|| + max(|lam|, |sigma|) ||M x||), Euclidean norms.

    The shift enters the scale so that an eigenvalue at zero (allowed when
    sigma != 0) still has a meaningful relative residual.
    """
    KX, MX = K @ X, M @ X
    R = KX - MX * lam
    norm = lambda Y: np.linalg.norm(Y, axis=0)
    den = norm(KX) + np.maximum(np.abs(lam), abs(sigma)) * norm(MX)
    return norm(R) / np.maximum(den, 1e-300)


def eigs_shift_invert(K, M, req: EigenRequest = EigenRequest()) -> EigenResult:
    """Eigenpairs of K x = lam M x closest to the shift, ascending.

    Lanczos on (K - sigma M)^{-1} M in the M inner product with full
    (twice-iterated Gram-Schmidt) reorthogonalization.  Convergence is judged
    on the backward error of ``_residuals``.
    """
    K = as_symmetric(K)
    M = as_symmetric(M)
    n = K.shape[0]
    nev = min(req.nev, n)
    sigma = float(req.sigma)
    nudged = False
    for attempt in range(6):
        try:
            F = factorize(K - sigma * M)
            break
        except SingularMatrixError:
            nudged = True
            sigma = sigma + (1e-7 + 1e-7 * abs(sigma)) * (attempt + 1)
    else:
        raise SingularMatrixError("shifted matrix singular after nudging")
    below = F.inertia[1] if F._symmetric else -1

    if n <= max(2 * nev + 10, 40):
        lam, X = sla.eigh(K.toarray(), M.toarray())
        order = np.argsort(np.abs(lam - sigma))[:nev]
        order = order[np.argsort(lam[order])]
        lam, X = lam[order], X[:, order]
        res = _residuals(K, M, lam, X, sigma)
        return EigenResult([EigenPair(float(l), X[:, i].copy(), float(r))
                            for i, (l, r) in enumerate(zip(lam, res))], sigma, nudged, 0, below)

    rng = np.random.default_rng(req.seed)
    q = rng.standard_normal(n)
    q /= np.sqrt(q @ (M @ q))
    maxit = min(req.max_iter, n)
    Q = np.zeros((n, maxit + 1))
    MQ = np.zeros((n, maxit + 1))
    Q[:, 0] = q
    MQ[:, 0] = M @ q
    alpha, beta = [], []
    converged = None
    j = -1
    for j in range(maxit):
        w = F.solve(MQ[:, j])
        a = w @ MQ[:, j]
        alpha.append(a)
        for _ in range(2):
            w -= Q[:, :j + 1] @ (MQ[:, :j + 1].T @ w)
        Mw = M @ w
        b = np.sqrt(max(w @ Mw, 0.0))
        beta.append(b)
        steps = j + 1
        if steps >= nev + 2 and (steps % 5 == 0 or b < 1e-14 or steps == maxit):
            T = np.diag(alpha) + np.diag(beta[:-1], 1) + np.diag(beta[:-1], -1)
            theta, S = np.linalg.eigh(T)
            idx = np.argsort(-np.abs(theta))[:nev]
            est = np.abs(b * S[-1, idx]) / np.maximum(np.abs(theta[idx]), 1e-300)
            if np.all(est < 0.1 * req.tol) or b < 1e-14:
                X = Q[:, :steps] @ S[:, idx]
                lam = sigma + 1.0 / theta[idx]
                res = _residuals(K, M, lam, X, sigma)
                if np.all(res <= req.tol) or b < 1e-14 or steps == maxit:
                    converged = (lam, X, res, steps)
                    if np.all(res <= req.tol):
                        break
        if b < 1e-14:
            break
        Q[:, j + 1] = w / b
        MQ[:, j + 1] = Mw / b
    if converged is None or not np.all(converged[2] <= req.tol):
        got = None if converged is None else float(np.max(converged[2]))
        raise ConvergenceError(f"Lanczos did not reach tol {req.tol} in {j + 1} steps (best {got})")
    lam, X, res, steps = converged
    order = np.argsort(lam)
    out = []
    for i in order:
        x = X[:, i]
        x = x / np.sqrt(x @ (M @ x))
        out.append(EigenPair(float(lam[i]), x, float(res[i])))
    return EigenResult(out, sigma, nudged, steps, below)
