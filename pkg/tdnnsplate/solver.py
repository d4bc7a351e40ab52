import logging

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from joblib import Parallel, delayed

from tdnnsplate.assembly import recover_shear
from tdnnsplate.postprocess import SolutionFields

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
SYMMETRY_TOL = 1e-13


class SolverError(RuntimeError):
    """
    Failure of a factorization or an iterative solve.

    Attributes
    ----------
    element : int
        Triangle whose local block failed, None for global failures
    """

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class CondensedSystem(object):
    """
    Schur complement of a hybrid system on the interface dofs (rotation and deflection
    dofs on vertices and edges plus the edge multipliers).

    Moments and single-element bubbles are recovered element by element from the
    stored local factorizations.

    Attributes
    ----------
    matrix : scipy.sparse.csr_matrix
        Symmetric positive definite Schur complement
    rhs : np.ndarray
        Condensed right-hand side
    system : BlockSystem
        Hybrid system the complement was built from
    unknowns : np.ndarray
        Index of every condensed unknown in the (rotation, deflection, multiplier) numbering
    """

    def __init__(self, matrix, rhs, system, unknowns, records):
        self.matrix = matrix
        self.rhs = rhs
        self.system = system
        self.unknowns = unknowns
        self._records = records

    @property
    def dimension(self):
        return self.matrix.shape[0]

    def expand(self, x):
        """
        Back-substitutes moments and bubbles.

        Parameters
        ----------
        x : np.ndarray
            Solution of the condensed system

        Returns
        -------
        coeffs : dict
            Coefficient vectors per space
        """
        system = self.system
        spaces = system.spaces
        u = np.concatenate([system.fixed_values[name]
                            for name in ("rotation", "deflection", "multiplier")])
        u[self.unknowns] = x
        moment = system.fixed_values["moment"].copy()
        for record in self._records:
            local = record.expand(u)
            moment[record.moment_dofs[record.moment_free]] = local[0]
            if record.bubbles is not None:
                u[record.u_dofs[record.bubbles]] = local[1]
        ntheta = spaces["rotation"].ndof
        nw = spaces["deflection"].ndof
        return {"moment": moment, "rotation": u[:ntheta], "deflection": u[ntheta:ntheta + nw],
                "multiplier": u[ntheta + nw:]}


class _ElementRecord(object):
    """Local factorization data of one triangle for back-substitution."""

    def __init__(self, moment_dofs, moment_free, u_dofs, factor, rhs_part, bubbles):
        self.moment_dofs = moment_dofs
        self.moment_free = moment_free
        self.u_dofs = u_dofs
        self.factor = factor
        self.rhs_part = rhs_part
        self.bubbles = bubbles

    def expand(self, u):
        local_u = u[self.u_dofs]
        interface = self.factor["interface"]
        bubble_values = None
        if self.bubbles is not None:
            bubble_values = self.rhs_part["bubble"] - self.factor["bubble_coupling"] @ \
                local_u[interface]
            local_u = local_u.copy()
            local_u[self.bubbles] = bubble_values
        moment = self.rhs_part["moment"] - self.factor["AiG"] @ local_u
        return moment, bubble_values


def _cholesky(matrix, what, t):
    try:
        return la.cho_factor(matrix)
    except la.LinAlgError as err:
        raise SolverError("Singular local {} block in element {}".format(what, t), element=t) from err


def _condense_chunk(system, masks, blocks):
    spaces = system.spaces
    Ms, Rs, Ws, Ls = (spaces[name] for name in ("moment", "rotation", "deflection", "multiplier"))
    u_fixed, u_values, bubble = masks
    nw_off = Rs.ndof
    nl_off = Rs.ndof + Ws.ndof
    cache = {}
    results = []
    for block in blocks:
        t = block.t
        m_dofs = Ms.element_dofs[t]
        m_free = ~Ms.essential_mask[m_dofs]
        u_dofs = np.concatenate((Rs.element_dofs[t], nw_off + Ws.element_dofs[t],
                                 nl_off + Ls.element_dofs[t]))
        fixed = u_fixed[u_dofs]
        bubbles = bubble[u_dofs] & ~fixed
        interface = ~fixed & ~bubbles
        key = (block.key, m_free.tobytes(), fixed.tobytes(), bubbles.tobytes())
        factor = cache.get(key)
        nrot_w = block.S.shape[0]
        if factor is None:
            signs = np.concatenate((Rs.element_signs[t], Ws.element_signs[t],
                                    Ls.element_signs[t])).astype(float)
            G = np.hstack((block.B, np.zeros((len(m_dofs), Ws.kind.ndof_local)), block.C)) * signs
            chol = _cholesky(block.A[np.ix_(m_free, m_free)], "compliance", t)
            AiG = la.cho_solve(chol, G[m_free])
            K = G[m_free].T @ AiG
            K[:nrot_w, :nrot_w] += block.S
            factor = {"G": G, "chol": chol, "AiG": AiG, "K": K, "interface": interface}
            if bubbles.any():
                bchol = _cholesky(K[np.ix_(bubbles, bubbles)], "bubble", t)
                coupling = la.cho_solve(bchol, K[np.ix_(bubbles, interface)])
                factor["bchol"] = bchol
                factor["bubble_coupling"] = coupling
                factor["schur"] = K[np.ix_(interface, interface)] - \
                    K[np.ix_(interface, bubbles)] @ coupling
            else:
                factor["schur"] = K[np.ix_(interface, interface)]
            cache[key] = factor
        G, K = factor["G"], factor["K"]
        m_fixed_values = system.fixed_values["moment"][m_dofs[~m_free]]
        a = block.f_M[m_free] - block.A[np.ix_(m_free, ~m_free)] @ m_fixed_values
        Aia = la.cho_solve(factor["chol"], a)
        f_u = np.concatenate((block.f_u, np.zeros(Ls.kind.ndof_local)))
        r = f_u + G[~m_free].T @ m_fixed_values + G[m_free].T @ Aia
        r = r - K[:, fixed] @ u_values[u_dofs[fixed]]
        rhs_part = {"moment": Aia}
        if bubbles.any():
            rhs_part["bubble"] = la.cho_solve(factor["bchol"], r[bubbles])
            r_condensed = r[interface] - K[np.ix_(interface, bubbles)] @ rhs_part["bubble"]
        else:
            r_condensed = r[interface]
        record = _ElementRecord(m_dofs, m_free, u_dofs, factor, rhs_part,
                                bubbles if bubbles.any() else None)
        results.append((u_dofs[interface], factor["schur"], r_condensed, record))
    return results


def condense(system, n_jobs=1):
    """
    Eliminates the moments and the single-element bubbles of a hybrid system.

    Parameters
    ----------
    system : BlockSystem
        Hybrid system
    n_jobs : int, optional (default=1)
        Worker threads of the element loop

    Returns
    -------
    condensed : CondensedSystem
    """
    if not system.hybrid:
        raise ValueError("Static condensation needs a hybrid system")
    spaces = system.spaces
    Rs, Ws, Ls = spaces["rotation"], spaces["deflection"], spaces["multiplier"]
    u_fixed = np.concatenate((Rs.essential_mask, Ws.essential_mask, Ls.essential_mask))
    u_values = np.concatenate([system.fixed_values[name]
                               for name in ("rotation", "deflection", "multiplier")])
    bubble = np.zeros(len(u_fixed), dtype=bool)
    bubble[Rs.interior_dofs()] = True
    bubble[Rs.ndof + Ws.interior_dofs()] = True
    unknowns = np.flatnonzero(~u_fixed & ~bubble)
    numbering = -np.ones(len(u_fixed), dtype=np.int64)
    numbering[unknowns] = np.arange(len(unknowns))

    blocks = system.elements
    chunks = [chunk for chunk in np.array_split(np.arange(len(blocks)), max(1, 4 * n_jobs))
              if len(chunk)]
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_condense_chunk)(system, (u_fixed, u_values, bubble), [blocks[i] for i in chunk])
        for chunk in chunks)
    results = [item for chunk in results for item in chunk]

    rows, cols, vals, rhs_dofs, rhs_vals, records = [], [], [], [], [], []
    for dofs, schur, r, record in results:
        index = numbering[dofs]
        rows.append(np.repeat(index, len(index)))
        cols.append(np.tile(index, len(index)))
        vals.append(schur.ravel())
        rhs_dofs.append(index)
        rhs_vals.append(r)
        records.append(record)
    n = len(unknowns)
    matrix = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(n, n)).tocsr()
    matrix.sort_indices()
    rhs = np.bincount(np.concatenate(rhs_dofs), weights=np.concatenate(rhs_vals), minlength=n)
    logger.info("Condensed hybrid system from {} to {} dofs".format(system.ndof_total, n))
    return CondensedSystem(matrix, rhs, system, unknowns, records)


def is_symmetric(matrix, tol=SYMMETRY_TOL):
    """True when |A - A^T| <= tol max|A| entrywise."""
    matrix = sp.csr_matrix(matrix)
    scale = abs(matrix).max() if matrix.nnz else 0.0
    if scale == 0:
        return True
    return abs(matrix - matrix.T).max() <= tol * scale


def _relative_residual(matrix, x, rhs):
    return np.linalg.norm(matrix @ x - rhs) / np.linalg.norm(rhs)


def solve_spd(matrix, rhs, method="direct", tol=DEFAULT_TOL, return_info=False):
    """
    Solves a sparse symmetric positive definite system.

    The direct path factors with a symmetric minimum degree ordering and diagonal
    pivots only, so the factorization is a Cholesky factorization in LDU form and
    every pivot must be positive. The iterative path runs Jacobi preconditioned
    conjugate gradients with at most 10 n iterations.

    Parameters
    ----------
    matrix : scipy.sparse matrix
        Symmetric matrix
    rhs : np.ndarray
    method : str, optional (default='direct')
        'direct' or 'cg'
    tol : float, optional (default=1e-10)
        Relative residual target
    return_info : bool, optional (default=False)
        Also return a dictionary with solver statistics

    Returns
    -------
    x : np.ndarray
    info : dict
        Only if ``return_info``

    Raises
    ------
    SolverError
        Non-positive pivot, conjugate gradient breakdown or non-convergence
    """
    if method not in ("direct", "cg"):
        raise ValueError("Unknown solver method '{}'".format(method))
    if tol <= 0:
        raise ValueError("Tolerance must be positive, got {}".format(tol))
    matrix = sp.csr_matrix(matrix, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if not is_symmetric(matrix):
        raise ValueError("Matrix is not symmetric")
    n = matrix.shape[0]
    if not np.any(rhs):
        x, info = np.zeros(n), {"method": method, "iterations": 0, "residual": 0.0}
    elif method == "direct":
        x, info = _cholesky_solve(matrix, rhs, tol)
    else:
        x, info = _conjugate_gradient(matrix, rhs, tol)
    logger.info("SPD solve ({}) of size {}: {}".format(method, n, info))
    return (x, info) if return_info else x


def _cholesky_solve(matrix, rhs, tol):
    try:
        factor = spla.splu(matrix.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options={"SymmetricMode": True})
    except RuntimeError as err:
        raise SolverError("Sparse factorization failed: {}".format(err)) from err
    pivots = factor.U.diagonal()
    if np.any(pivots <= 0):
        position = int(np.argmin(pivots))
        raise SolverError("Non-positive pivot {} at position {}: matrix is not positive "
                          "definite".format(pivots[position], position))
    x = factor.solve(rhs)
    residual = _relative_residual(matrix, x, rhs)
    if residual > tol:
        x = x + factor.solve(rhs - matrix @ x)
        residual = _relative_residual(matrix, x, rhs)
    if residual > max(tol, DEFAULT_TOL):
        logger.warning("Direct solve residual {} above {}".format(residual, tol))
    info = {"method": "direct", "nnz_factor": int(factor.L.nnz + factor.U.nnz),
            "min_pivot": float(pivots.min()), "residual": float(residual)}
    return x, info


def _conjugate_gradient(matrix, rhs, tol):
    diagonal = matrix.diagonal()
    if np.any(diagonal <= 0):
        raise SolverError("Non-positive diagonal entry: matrix is not positive definite")
    inverse_diagonal = 1.0 / diagonal
    max_iter = 10 * matrix.shape[0]
    x = np.zeros_like(rhs)
    r = rhs.copy()
    z = inverse_diagonal * r
    p = z.copy()
    rz = r @ z
    norm_b = np.linalg.norm(rhs)
    iterations = 0
    while np.linalg.norm(r) / norm_b > tol:
        if iterations >= max_iter:
            raise SolverError("Conjugate gradients did not converge in {} iterations "
                              "(relative residual {:e})".format(max_iter, np.linalg.norm(r) / norm_b))
        Ap = matrix @ p
        curvature = p @ Ap
        if curvature <= 0:
            raise SolverError("Non-positive curvature {} in conjugate gradients".format(curvature))
        alpha = rz / curvature
        x += alpha * p
        r -= alpha * Ap
        z = inverse_diagonal * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        iterations += 1
    return x, {"method": "cg", "iterations": iterations,
               "residual": float(np.linalg.norm(r) / norm_b)}


def _fields(system, coeffs, stats):
    spaces = system.spaces
    shear = recover_shear(spaces, system.tensors, coeffs["rotation"], coeffs["deflection"])
    return SolutionFields(spaces, system.tensors, coeffs["moment"], coeffs["rotation"],
                          coeffs["deflection"], shear, coeffs.get("multiplier"), stats)


def solve_monolithic(system, tol=DEFAULT_TOL):
    """
    Solves the full symmetric indefinite system with a dense factorization.

    Works for monolithic and hybrid systems alike and serves as the cross-check of
    the condensed path.

    Returns
    -------
    fields : SolutionFields
    """
    matrix = system.matrix()
    rhs = system.rhs()
    if not np.any(rhs):
        x = np.zeros(len(rhs))
        residual = 0.0
    else:
        dense = matrix.toarray()
        try:
            x = la.solve(dense, rhs, assume_a="sym")
            residual = _relative_residual(matrix, x, rhs)
            if residual > tol:
                x = x + la.solve(dense, rhs - matrix @ x, assume_a="sym")
                residual = _relative_residual(matrix, x, rhs)
        except la.LinAlgError as err:
            raise SolverError("Dense symmetric factorization broke down: {}".format(err)) from err
        if residual > tol:
            logger.warning("Monolithic solve residual {} above {}".format(residual, tol))
    stats = {"method": "dense", "size": len(rhs), "residual": float(residual)}
    logger.info("Monolithic solve: {}".format(stats))
    return _fields(system, system.expand(x), stats)


def solve(system, method="direct", tol=DEFAULT_TOL, n_jobs=1):
    """
    Solves an assembled system: condensation plus SPD solve for hybrid systems, the
    dense indefinite path otherwise.

    Returns
    -------
    fields : SolutionFields
    """
    if not system.hybrid:
        return solve_monolithic(system, tol)
    condensed = condense(system, n_jobs=n_jobs)
    x, info = solve_spd(condensed.matrix, condensed.rhs, method=method, tol=tol, return_info=True)
    info["condensed_size"] = condensed.dimension
    return _fields(system, condensed.expand(x), info)
