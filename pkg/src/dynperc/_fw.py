"""Compiled inner loop of the simplex-constrained quadratic minimizer."""

import numba as nb
import numpy as np


@nb.njit(cache=True)
def pairwise_fw(K, mu, tol, max_iter):
    """Minimize mu' K mu over the simplex by pairwise Frank-Wolfe steps.

    Each step moves mass from the worst support atom (largest potential) to
    the best atom overall (smallest potential, lowest index on ties) with an
    exact line search.  Stops when both the Frank-Wolfe gap
    2 (E - min potential) and the support spread 2 (max support potential - E)
    are <= tol.  Returns (mu, energy, fw_gap, iterations, converged, history).
    """
    N = K.shape[0]
    Kmu = K @ mu
    E = mu @ Kmu
    history = np.empty(max_iter + 1)
    history[0] = E
    it = 0
    fw_gap = 0.0
    converged = False
    while True:
        s = 0
        best = Kmu[0]
        for i in range(1, N):
            if Kmu[i] < best:
                best = Kmu[i]
                s = i
        a = -1
        worst = -np.inf
        for i in range(N):
            if mu[i] > 0.0 and Kmu[i] > worst:
                worst = Kmu[i]
                a = i
        fw_gap = 2.0 * (E - best)
        spread = 2.0 * (worst - E)
        if fw_gap <= tol and spread <= tol:
            converged = True
            break
        if it >= max_iter or a == s:
            break
        g = worst - best
        curv = K[s, s] + K[a, a] - 2.0 * K[s, a]
        gmax = mu[a]
        if curv > 0.0:
            gam = g / curv
            if gam > gmax:
                gam = gmax
        else:
            gam = gmax
        if gam <= 0.0:
            break
        if gam == gmax:
            mu[s] += mu[a]
            mu[a] = 0.0
        else:
            mu[s] += gam
            mu[a] -= gam
        for i in range(N):
            Kmu[i] += gam * (K[s, i] - K[a, i])
        E_new = mu @ Kmu
        it += 1
        history[it] = E_new
        E = E_new
        if it % 512 == 0:
            Kmu = K @ mu
            E = mu @ Kmu
    return mu, E, fw_gap, it, converged, history[: it + 1]
