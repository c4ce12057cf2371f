"""Degree-distribution algebra for the transmission graph.

Node-perspective distributions of a user transmitting with probability p
are binomial: over T slots for variable nodes, over the N_i group members
for observation nodes. Edge-perspective distributions follow by the
derivative identity lambda(x) = L'(x)/L'(1).

Binomial coefficient masses are computed in log space so N up to 1e5 is
safe, and tiny tails are truncated; polynomials known to be binomial also
carry (n, p) so evaluation can use the exact closed form (1-p+p*x)^n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Tail mass below which binomial coefficient sequences are truncated.
TAIL_TOL = 1e-14


def _binomial_coeffs(n: int, p: float) -> np.ndarray:
    if p == 0.0:
        return np.array([1.0])
    if p == 1.0:
        out = np.zeros(n + 1)
        out[n] = 1.0
        return out
    log_p, log_q = math.log(p), math.log1p(-p)
    lgn = math.lgamma(n + 1)
    ks = np.arange(n + 1)
    log_mass = (
        lgn
        - np.array([math.lgamma(k + 1) + math.lgamma(n - k + 1) for k in ks])
        + ks * log_p
        + (n - ks) * log_q
    )
    mass = np.exp(log_mass)
    # Truncate once the remaining tail is negligible; renormalize only when
    # something was actually dropped (the untruncated sequence is already
    # exact to rounding).
    cum = np.cumsum(mass)
    keep = min(int(np.searchsorted(cum, 1.0 - TAIL_TOL)) + 2, n + 1)
    if keep < n + 1:
        mass = mass[:keep] / mass[:keep].sum()
    return mass


@dataclass(frozen=True)
class DegreePolynomial:
    """Probability generating polynomial sum_k coeffs[k] * x^k.

    `binom`, when set to (n, p), marks the polynomial as an exact
    binomial(n, p); evaluation then uses the closed form.
    """

    coeffs: np.ndarray
    binom: tuple[int, float] | None = None

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must be a non-empty 1-D sequence")
        if (c < -1e-15).any():
            raise ValueError("negative coefficient")
        object.__setattr__(self, "coeffs", np.maximum(c, 0.0))

    def __len__(self) -> int:
        return len(self.coeffs)

    def is_mass(self, tol: float = 1e-9) -> bool:
        return abs(float(self.coeffs.sum()) - 1.0) <= tol

    def eval(self, x):
        """Evaluate sum_k c_k x^k (closed form when binomial)."""
        if self.binom is not None:
            n, p = self.binom
            return (1.0 - p + p * np.asarray(x, dtype=float)) ** n
        return np.polynomial.polynomial.polyval(x, self.coeffs)

    def eval_coeffs(self, x):
        """Coefficient-path evaluation, kept separate for cross-checks."""
        return np.polynomial.polynomial.polyval(x, self.coeffs)

    def derivative_at(self, x):
        if self.binom is not None:
            n, p = self.binom
            if n == 0:
                return np.zeros_like(np.asarray(x, dtype=float)) + 0.0
            return n * p * (1.0 - p + p * np.asarray(x, dtype=float)) ** (n - 1)
        ks = np.arange(1, len(self.coeffs))
        return np.polynomial.polynomial.polyval(x, self.coeffs[1:] * ks)

    def mean_degree(self) -> float:
        if self.binom is not None:
            n, p = self.binom
            return n * p
        return float(np.arange(len(self.coeffs)) @ self.coeffs)


def variable_node_dist(t_slots: int, p: float) -> DegreePolynomial:
    """L_i: binomial(T, p) mass over the number of transmissions in T slots."""
    if t_slots < 0:
        raise ValueError(f"slot count must be >= 0, got {t_slots}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"transmission probability {p} outside [0, 1]")
    return DegreePolynomial(_binomial_coeffs(t_slots, p), binom=(t_slots, p))


def observation_node_dist(n_users: int, p: float) -> DegreePolynomial:
    """R_i: binomial(N_i, p) mass over simultaneous transmitters in one slot."""
    if n_users < 0:
        raise ValueError(f"group size must be >= 0, got {n_users}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"transmission probability {p} outside [0, 1]")
    return DegreePolynomial(_binomial_coeffs(n_users, p), binom=(n_users, p))


def edge_perspective(d: DegreePolynomial) -> DegreePolynomial:
    """lambda(x) = L'(x)/L'(1): coefficient k-1 is k*c_k / sum_j j*c_j."""
    if d.binom is not None:
        n, p = d.binom
        if n == 0 or p == 0.0:
            raise ValueError("edge perspective undefined for mean degree 0")
        return DegreePolynomial(_binomial_coeffs(n - 1, p), binom=(n - 1, p))
    mean = d.mean_degree()
    if mean <= 0:
        raise ValueError("edge perspective undefined for mean degree 0")
    ks = np.arange(1, len(d.coeffs))
    return DegreePolynomial(d.coeffs[1:] * ks / mean)
