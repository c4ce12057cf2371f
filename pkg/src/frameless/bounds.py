"""Throughput bounds for cooperative retrieval.

The upper bound is M times the single-BS peak. The lower bound replaces
the exact retrieval probability with a quadratic-form lower bound on the
union of per-BS collision-free retrieval events, computed from the event
probabilities and their pairwise joints; the resulting PLR upper-bounds
the exact cooperative PLR at every frame length while needing only
|S(u_i)|(|S(u_i)|+1)/2 terms per group instead of the 3^(I-1) pattern
enumeration.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .evolution import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    SINGLE_BS_PEAK,
    BatchEvolution,
    EvolutionResult,
    _check_unit,
    _EngineBase,
)
from .topology import NetworkTopology, TargetDegreeVector

PIVOT_TOL = 1e-14


def upper_bound_throughput(num_bs: int) -> float:
    """Cooperative throughput never exceeds M times the single-BS peak."""
    if num_bs < 1:
        raise ValueError(f"need at least one BS, got {num_bs}")
    return num_bs * SINGLE_BS_PEAK


def solve_gauss_batched(q: np.ndarray, p: np.ndarray):
    """Solve q @ y = p for stacked small systems by pivoted elimination.

    Returns (y, singular) where singular flags systems with a pivot below
    PIVOT_TOL; their y rows are unusable and callers must fall back.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    n, m, _ = q.shape
    aug = np.concatenate([q.copy(), p[:, :, None]], axis=2)
    singular = np.zeros(n, dtype=bool)
    rows = np.arange(n)
    for k in range(m):
        piv = np.argmax(np.abs(aug[:, k:, k]), axis=1) + k
        swap = aug[rows, piv].copy()
        aug[rows, piv] = aug[:, k]
        aug[:, k] = swap
        pivot = aug[:, k, k]
        singular |= np.abs(pivot) < PIVOT_TOL
        safe = np.where(singular, 1.0, pivot)
        if k + 1 < m:
            factors = aug[:, k + 1 :, k] / safe[:, None]
            aug[:, k + 1 :, :] -= factors[:, :, None] * aug[:, k : k + 1, :]
    y = np.zeros((n, m))
    for k in range(m - 1, -1, -1):
        acc = aug[:, k, m] - (aug[:, k, k + 1 : m] * y[:, k + 1 :]).sum(axis=1)
        y[:, k] = acc / np.where(singular, 1.0, aug[:, k, k])
    return y, singular


def _union_lower_bound(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """p Q^-1 p^t per stacked system, falling back to max_j p_j when Q is
    numerically singular. Clamped into [0, min(1, sum_j p_j)]."""
    n, m = p.shape
    fallback = p.max(axis=1)
    if m == 1:
        out = p[:, 0]
    elif m == 2:
        det = q[:, 0, 0] * q[:, 1, 1] - q[:, 0, 1] * q[:, 1, 0]
        num = (
            p[:, 0] * p[:, 0] * q[:, 1, 1]
            - 2.0 * p[:, 0] * p[:, 1] * q[:, 0, 1]
            + p[:, 1] * p[:, 1] * q[:, 0, 0]
        )
        singular = np.abs(det) < PIVOT_TOL
        out = np.where(singular, fallback, num / np.where(singular, 1.0, det))
    else:
        y, singular = solve_gauss_batched(q, p)
        out = np.where(singular, fallback, (p * y).sum(axis=1))
    return np.clip(out, 0.0, np.minimum(1.0, p.sum(axis=1)))


class BoundEngine(_EngineBase):
    """Density evolution with the matrix lower bound on retrieval."""

    def __init__(self, topology: NetworkTopology):
        super().__init__(topology)
        # Per group: companion index lists at each BS and at each BS pair.
        self._single: list[list[np.ndarray]] = []
        self._pairs: list[list[np.ndarray]] = []
        for i, g in enumerate(topology.groups):
            at_bs = []
            for j in g.bs_set:
                members = set(topology.groups_at_bs[j - 1]) - {i}
                at_bs.append(np.array(sorted(members), dtype=np.intp))
            joins = []
            for j1, j2 in combinations(range(len(g.bs_set)), 2):
                members = (
                    set(topology.groups_at_bs[g.bs_set[j1] - 1])
                    | set(topology.groups_at_bs[g.bs_set[j2] - 1])
                ) - {i}
                joins.append(np.array(sorted(members), dtype=np.intp))
            self._single.append(at_bs)
            self._pairs.append(joins)

    def evaluate(
        self,
        p_rows,
        t_rows,
        max_iter: int = DEFAULT_MAX_ITER,
        tol: float = DEFAULT_TOL,
    ) -> BatchEvolution:
        p = np.atleast_2d(np.asarray(p_rows, dtype=float))
        t = np.asarray(t_rows, dtype=np.int64)
        if (t < 1).any():
            raise ValueError("slot counts must be >= 1")
        n_rows, n_groups = p.shape
        nm1 = np.maximum(self.counts - 1.0, 0.0)
        x = np.ones((n_rows, n_groups))
        w = np.ones((n_rows, n_groups))
        iters = np.zeros(n_rows, dtype=np.int64)
        conv = np.zeros(n_rows, dtype=bool)
        act = np.arange(n_rows)
        for it in range(1, max_iter + 1):
            xa = x[act]
            pa = p[act]
            base = 1.0 - pa * xa
            big_r = base**self.counts
            rho = base**nm1
            wa = np.empty_like(xa)
            for i in range(n_groups):
                singles = self._single[i]
                m = len(singles)
                pv = np.empty((len(act), m))
                for jj, members in enumerate(singles):
                    pv[:, jj] = rho[:, i] * big_r[:, members].prod(axis=1)
                if m == 1:
                    bound = pv[:, 0]
                else:
                    qm = np.empty((len(act), m, m))
                    kk = 0
                    for j1 in range(m):
                        qm[:, j1, j1] = pv[:, j1]
                        for j2 in range(j1 + 1, m):
                            joint = rho[:, i] * big_r[:, self._pairs[i][kk]].prod(
                                axis=1
                            )
                            qm[:, j1, j2] = joint
                            qm[:, j2, j1] = joint
                            kk += 1
                    bound = _union_lower_bound(pv, qm)
                wa[:, i] = 1.0 - bound
            _check_unit("w", wa)
            np.clip(wa, 0.0, 1.0, out=wa)
            xn = (1.0 - pa + pa * wa) ** (t[act, None] - 1)
            delta = np.abs(xn - xa).max(axis=1)
            x[act] = xn
            w[act] = wa
            iters[act] = it
            done = delta < tol
            conv[act[done]] = True
            act = act[~done]
            if act.size == 0:
                break
        return self._finish(p, t, w, x, iters, conv)


def evolve_lower_bound(
    topology: NetworkTopology,
    degrees,
    t_slots: int,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    *,
    engine: BoundEngine | None = None,
) -> EvolutionResult:
    """PLR upper bound (throughput lower bound) at one frame length."""
    if not isinstance(degrees, TargetDegreeVector):
        degrees = TargetDegreeVector(tuple(degrees))
    for gi, grp in zip(degrees.g, topology.groups):
        if grp.num_users > 0 and gi <= 0:
            raise ValueError(
                "the matrix bound needs G > 0 for every populated group"
            )
    engine = engine or BoundEngine(topology)
    out = engine.evaluate_degrees(degrees, [t_slots], max_iter=max_iter, tol=tol)
    return EvolutionResult(
        t=t_slots,
        plr=out.plr_groups[0],
        w=out.w[0],
        x=out.x[0],
        plr_avg=float(out.plr_avg[0]),
        throughput=float(out.throughput[0]),
        iterations=int(out.iterations[0]),
        converged=bool(out.converged[0]),
    )


def lower_bound_plr(
    topology: NetworkTopology,
    degrees,
    t_slots: int,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> np.ndarray:
    """Per-group PLR upper bound from the union-bound toy model."""
    return evolve_lower_bound(topology, degrees, t_slots, max_iter, tol).plr
