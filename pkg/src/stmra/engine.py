"""Multi-resolution approximation: likelihood and prediction on the region tree.

The approximate process is a sum of independent components, one per
non-leaf region ``R`` at level ``m``: the remainder process of level ``m``
projected onto the knots of ``R``, plus, in each leaf, the full level-``M``
remainder. In whitened coordinates ``zeta_R ~ N(0, I)`` the observations
read ``y = sum_R G_R zeta_R + e`` with block-diagonal leaf noise ``e``, and
the posterior precision of ``zeta`` only couples regions on a common
root-to-leaf chain. Eliminating regions children-first therefore needs
only small per-region factorizations.

All per-region quantities are held as stacks over the regions of one level
(padded to a common size with identity/zero entries), so each step is a
handful of batched numpy calls rather than a loop over regions.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._parallel import worker_count
from .covariance import CovarianceModel
from .errors import ConditioningError, DataError
from .partition import PartitionTree, shifted_partitions

JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class PredictionField:
    locations: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    seconds: float = float("nan")

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def __len__(self):
        return len(self.mean)


# --------------------------------------------------------------------------
# batched linear algebra helpers
# --------------------------------------------------------------------------


def _t(a):
    return np.swapaxes(a, -1, -2)


def _solve(L, B):
    return np.linalg.solve(L, B)


def _cho_solve(L, B):
    return np.linalg.solve(_t(L), np.linalg.solve(L, B))


def cholesky(A, mask=None, paths=None):
    """Batched lower Cholesky factor with a per-matrix jitter ladder.

    The ladder adds ``j * trace / n`` to the diagonal for ``j`` in
    ``JITTER_LADDER``; ``n`` counts unmasked rows only.
    """
    try:
        L = np.linalg.cholesky(A)
        if np.all(np.isfinite(L)):
            return L
    except np.linalg.LinAlgError:
        pass
    A = np.asarray(A)
    batch = A.reshape((-1,) + A.shape[-2:])
    flat_mask = None if mask is None else np.asarray(mask).reshape(-1, A.shape[-1])
    out = np.empty_like(batch)
    for i, a in enumerate(batch):
        real = np.ones(a.shape[-1], bool) if flat_mask is None else flat_mask[i]
        n = max(int(real.sum()), 1)
        scale = np.trace(a[np.ix_(real, real)]) / n if real.any() else 1.0
        for jit in JITTER_LADDER:
            try:
                li = np.linalg.cholesky(a + np.diag(jit * scale * real))
            except np.linalg.LinAlgError:
                continue
            if np.all(np.isfinite(li)):
                out[i] = li
                break
        else:
            where = None if paths is None else paths[i]
            raise ConditioningError("matrix is not positive definite even after jitter", where)
    return out.reshape(A.shape)


def _masked_kernel(cov, X, Y, mx, my):
    K = cov.matrix(X, Y)
    return K * (mx[..., :, None] & my[..., None, :])


def _masked_gram(cov, X, mx):
    K = _masked_kernel(cov, X, X, mx, mx)
    idx = np.arange(X.shape[-2])
    K[..., idx, idx] += ~mx
    return K


# --------------------------------------------------------------------------
# theta-independent tree layout
# --------------------------------------------------------------------------


def _pad(groups, width, fill):
    out = np.full((len(groups), width) + np.shape(fill), fill, dtype=float)
    mask = np.zeros((len(groups), width), bool)
    for i, g in enumerate(groups):
        out[i, : len(g)] = g
        mask[i, : len(g)] = True
    return out, mask


class _Layout:
    """Region tree flattened into per-level padded arrays."""

    def __init__(self, tree: PartitionTree):
        levels = tree.levels()
        self.depth = D = tree.M_eff
        if len(levels) != D + 1:
            raise DataError("tree depth disagrees with M_eff")
        self.counts = [len(regs) for regs in levels]
        self.fanout = [len(regs[0].children) for regs in levels[:-1]]
        self.paths = [[reg.path for reg in regs] for regs in levels]
        for m in range(D):
            if any(len(reg.children) != self.fanout[m] for reg in levels[m]):
                raise DataError("regions of one level must have equal child counts")
        self.parent = [None] + [np.repeat(np.arange(self.counts[m]), self.fanout[m]) for m in range(D)]
        self.anc = [np.zeros((1, 0), int)]
        for m in range(1, D + 1):
            self.anc.append(np.column_stack([self.anc[m - 1][self.parent[m]], self.parent[m]]))
        self.rank = max([len(reg.knots) for regs in levels[:-1] for reg in regs], default=0)
        self.knots, self.kmask = [], []
        for regs in levels[:-1]:
            q, mk = _pad([reg.knots for reg in regs], self.rank, np.zeros(3))
            self.knots.append(q)
            self.kmask.append(mk)
        leaves = levels[-1]
        obs, pred = tree.obs, tree.pred
        self.n_obs = len(obs)
        self.n_pred = len(pred)
        self.o_width = max(len(reg.obs_index) for reg in leaves)
        self.p_width = max(len(reg.pred_index) for reg in leaves)
        self.obs_index, self.omask = _pad([reg.obs_index for reg in leaves], self.o_width, -1.0)
        self.pred_index, self.pmask = _pad([reg.pred_index for reg in leaves], self.p_width, -1.0)
        self.obs_index = self.obs_index.astype(int)
        self.pred_index = self.pred_index.astype(int)
        self.obs_loc = np.where(self.omask[..., None], obs.locations[self.obs_index], 0.0)
        self.obs_val = np.where(self.omask, obs.values[self.obs_index], 0.0)
        self.pred_loc = np.where(self.pmask[..., None], pred[self.pred_index] if len(pred) else 0.0, 0.0)

    def reduce_children(self, arr, m):
        """Sum a level-(m+1) stack over the children of each level-m region."""
        return arr.reshape((self.counts[m], self.fanout[m]) + arr.shape[1:]).sum(axis=1)


# --------------------------------------------------------------------------
# model
# --------------------------------------------------------------------------


class MraModel:
    """Partition tree bound to a covariance model."""

    def __init__(self, tree: PartitionTree, cov: CovarianceModel):
        if len(tree.obs) < 1:
            raise DataError("MRA model needs at least one observation")
        self.tree = tree
        self.cov = cov
        self._layout = None

    @property
    def layout(self) -> _Layout:
        if self._layout is None:
            self._layout = _Layout(self.tree)
        return self._layout

    def _cov(self, theta):
        return self.cov if theta is None else self.cov.with_theta(theta)

    # -- top-down knot factorization -------------------------------------

    def _basis(self, cov, lay, fac, X, mX, m, anc):
        """Whitened ancestor bases ``L_k^{-1} V_k(Q_k, X)`` for k < m."""
        cur = [
            _masked_kernel(cov, X, lay.knots[j][anc[:, j]], mX, lay.kmask[j][anc[:, j]])
            for j in range(m)
        ]
        out = []
        for k in range(m):
            b = _solve(fac["L"][k][anc[:, k]], _t(cur[k]))
            out.append(b)
            for j in range(k + 1, m):
                cur[j] = cur[j] - _t(b) @ fac["B"][j][k][anc[:, j]]
        return out

    def _factor_knots(self, cov, lay):
        fac = {"L": [], "B": []}
        for m in range(lay.depth):
            X, mX, anc = lay.knots[m], lay.kmask[m], lay.anc[m]
            b = self._basis(cov, lay, fac, X, mX, m, anc)
            W = _masked_gram(cov, X, mX)
            for bk in b:
                W = W - _t(bk) @ bk
            fac["B"].append(b)
            fac["L"].append(cholesky(W, mX, lay.paths[m]))
        return fac

    # -- upward pass -----------------------------------------------------

    def _upward(self, cov):
        lay = self.layout
        D, r = lay.depth, lay.rank
        fac = self._factor_knots(cov, lay)
        X, mX = lay.obs_loc, lay.omask
        bO = self._basis(cov, lay, fac, X, mX, D, lay.anc[D])
        lam = _masked_gram(cov, X, mX)
        for bk in bO:
            lam = lam - _t(bk) @ bk
        L_lam = cholesky(lam, mX, lay.paths[D])
        G = np.concatenate([_t(bk) for bk in bO], axis=-1) if bO else np.zeros(X.shape[:2] + (0,))
        sol = _solve(L_lam, np.concatenate([G, lay.obs_val[..., None]], axis=-1))
        Gh, yh = sol[..., :-1], sol[..., -1]
        logdet = 2.0 * np.log(np.diagonal(L_lam, axis1=-2, axis2=-1)).sum()
        quad = float(np.sum(yh**2))
        A = _t(Gh) @ Gh
        w = np.einsum("nok,no->nk", Gh, yh)
        levels = [None] * D
        for m in range(D - 1, -1, -1):
            At = lay.reduce_children(A, m)
            wt = lay.reduce_children(w, m)
            s = slice(m * r, (m + 1) * r)
            S = At[:, s, s] + np.eye(r)
            Ls = cholesky(S, None, lay.paths[m])
            F = At[:, : m * r, s]
            z = wt[:, s]
            Sz = _cho_solve(Ls, z[..., None])[..., 0]
            logdet += 2.0 * np.log(np.diagonal(Ls, axis1=-2, axis2=-1)).sum()
            quad -= float(np.sum(z * Sz))
            if m > 0:
                SF = _cho_solve(Ls, _t(F))
                A = At[:, : m * r, : m * r] - F @ SF
                w = wt[:, : m * r] - np.einsum("nij,nj->ni", F, Sz)
                A = 0.5 * (A + _t(A))
            else:
                SF = np.zeros((len(Ls), r, 0))
            levels[m] = {"L": Ls, "SF": SF, "Sz": Sz}
        loglik = -0.5 * (lay.n_obs * LOG_2PI + logdet + quad)
        leaf = {"bO": bO, "L": L_lam, "Gh": Gh, "yh": yh}
        return loglik, fac, levels, leaf

    def loglik(self, theta=None) -> float:
        loglik, *_ = self._upward(self._cov(theta))
        return float(loglik)

    # -- prediction ------------------------------------------------------

    def predict(self, theta=None) -> PredictionField:
        start = time.perf_counter()
        cov = self._cov(theta)
        lay = self.layout
        D, r = lay.depth, lay.rank
        if lay.n_pred == 0:
            return PredictionField(np.zeros((0, 3)), np.zeros(0), np.zeros(0), 0.0)
        _, fac, levels, leaf = self._upward(cov)

        # posterior mean/covariance of each root-to-region chain of zeta
        mu = np.zeros((1, 0))
        sig = np.zeros((1, 0, 0))
        for m in range(D):
            Ls, SF, Sz = levels[m]["L"], levels[m]["SF"], levels[m]["Sz"]
            if m > 0:
                mu, sig = mu[lay.parent[m]], sig[lay.parent[m]]
            Gm = -SF
            Sinv = _cho_solve(Ls, np.broadcast_to(np.eye(r), Ls.shape))
            m_new = Sz + np.einsum("nij,nj->ni", Gm, mu)
            c_rp = Gm @ sig
            c_rr = Sinv + c_rp @ _t(Gm)
            mu = np.concatenate([mu, m_new], axis=1)
            sig = np.concatenate(
                [np.concatenate([sig, _t(c_rp)], axis=2), np.concatenate([c_rp, c_rr], axis=2)], axis=1
            )
        if D > 0:
            mu, sig = mu[lay.parent[D]], sig[lay.parent[D]]

        P, mP = lay.pred_loc, lay.pmask
        bP = self._basis(cov, lay, fac, P, mP, D, lay.anc[D])
        H = np.concatenate([_t(bk) for bk in bP], axis=-1) if bP else np.zeros(P.shape[:2] + (0,))
        V_op = _masked_kernel(cov, lay.obs_loc, P, lay.omask, mP)
        for bo, bp in zip(leaf["bO"], bP):
            V_op = V_op - _t(bo) @ bp
        U = _solve(leaf["L"], V_op)
        H = H - _t(U) @ leaf["Gh"]
        mean = np.einsum("nop,no->np", U, leaf["yh"]) + np.einsum("npk,nk->np", H, mu)
        var = cov.diag(P) - np.sum(U**2, axis=1) + np.einsum("npk,npk->np", H @ sig, H)
        for bp in bP:
            var = var - np.sum(bp**2, axis=1)

        out_mean = np.empty(lay.n_pred)
        out_var = np.empty(lay.n_pred)
        out_mean[lay.pred_index[mP]] = mean[mP]
        out_var[lay.pred_index[mP]] = np.maximum(var[mP], 0.0)
        return PredictionField(self.tree.pred, out_mean, out_var, time.perf_counter() - start)

    def cov_dense(self, locations) -> np.ndarray:
        return mra_cov_dense(self, locations)


def mra_loglik(model: MraModel, theta=None) -> float:
    return model.loglik(theta)


def mra_predict(model: MraModel, theta=None) -> PredictionField:
    return model.predict(theta)


# --------------------------------------------------------------------------
# dense reference for the approximate covariance
# --------------------------------------------------------------------------


def remainder_cov(cov: CovarianceModel, anchors, A, B) -> np.ndarray:
    """Covariance of the remainder after conditioning on each anchor knot set.

    ``anchors`` lists the knot sets of the ancestors, root first; the
    recursion conditions on them one at a time.
    """
    A = np.asarray(A, float).reshape(-1, 3)
    B = np.asarray(B, float).reshape(-1, 3)
    if not anchors:
        return cov.matrix(A, B)
    prev, Q = anchors[:-1], anchors[-1]
    Vqq = remainder_cov(cov, prev, Q, Q)
    try:
        sol = np.linalg.solve(Vqq, remainder_cov(cov, prev, Q, B))
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"singular knot Gram at anchor level {len(anchors) - 1}") from exc
    return remainder_cov(cov, prev, A, B) - remainder_cov(cov, prev, A, Q) @ sol


def mra_cov_dense(model: MraModel, locations) -> np.ndarray:
    """Dense MRA covariance among arbitrary locations (oracle-facing)."""
    tree, cov = model.tree, model.cov
    A = np.asarray(locations, float).reshape(-1, 3)
    leaf_paths = [reg.path for reg in tree.locate(A)]
    C = np.zeros((len(A), len(A)))
    for reg in tree.regions():
        idx = np.array([i for i, p in enumerate(leaf_paths) if p[: reg.level] == reg.path], dtype=int)
        if len(idx) == 0:
            continue
        chain = [anc.knots for anc in tree.ancestors(reg)]
        if reg.is_leaf:
            C[np.ix_(idx, idx)] += remainder_cov(cov, chain, A[idx], A[idx])
        elif len(reg.knots):
            Bm = remainder_cov(cov, chain, A[idx], reg.knots)
            W = remainder_cov(cov, chain, reg.knots, reg.knots)
            C[np.ix_(idx, idx)] += Bm @ np.linalg.solve(W, Bm.T)
    return C


# --------------------------------------------------------------------------
# averaged prediction over shifted partitions
# --------------------------------------------------------------------------


def averaged_predict(config, domain, obs, pred, cov, theta=None, shift_fraction=0.25, workers=None):
    """Average predictions from nine partitions with shifted split planes.

    Means and variances are averaged separately (no mixture term).
    """
    start = time.perf_counter()
    trees = shifted_partitions(config, domain, obs, pred, shift_fraction)
    cov = cov if theta is None else cov.with_theta(theta)

    def run(tree):
        return MraModel(tree, cov).predict()

    n_workers = worker_count() if workers is None else workers
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as ex:
            fields = list(ex.map(run, trees))
    else:
        fields = [run(t) for t in trees]
    mean = np.mean([f.mean for f in fields], axis=0)
    var = np.mean([f.variance for f in fields], axis=0)
    locs = np.asarray(pred, float).reshape(-1, 3)
    return PredictionField(locs, mean, var, time.perf_counter() - start)
