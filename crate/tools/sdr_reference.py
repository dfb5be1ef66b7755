"""Reference max-min SINR values for frozen small instances.

Builds the relaxed problem directly from the channel model with dense
Kronecker products, solves it by bisection with CVXPY (Clarabel), and writes
crates/core/tests/fixtures/sdr_reference.json.

    python3 tools/sdr_reference.py
"""
import json
import pathlib

import cvxpy as cp
import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "crates/core/tests/fixtures/sdr_reference.json"

# (L, G, users per group, P0 [W], per-antenna budget or None, sigma_ant^2, sigma_user^2, topology)
CASES = [
    (2, 1, 1, 2.0, None, 1.0, 1.0, "MIMO"),
    (2, 1, 2, 1.0, None, 0.5, 0.5, "MIMO"),
    (2, 2, 1, 4.0, None, 0.25, 0.25, "MIMO"),
    (2, 2, 2, 2.0, 1.5, 0.25, 0.25, "MIMO"),
    (3, 1, 3, 2.0, None, 1.0, 1.0, "MIMO"),
    (3, 2, 1, 4.0, 1.0, 0.25, 0.25, "MIMO"),
    (3, 2, 2, 3.0, None, 0.5, 1.0, "MIMO"),
    (3, 3, 2, 4.0, None, 0.25, 0.25, "MIMO"),
    (3, 2, 3, 4.0, 1.2, 0.25, 0.25, "MIMO"),
    (4, 1, 2, 2.0, None, 1.0, 1.0, "MIMO"),
    (4, 1, 4, 4.0, 0.8, 0.25, 0.25, "MIMO"),
    (4, 2, 2, 4.0, None, 0.25, 0.25, "MIMO"),
    (4, 2, 3, 2.0, 0.4, 0.5, 0.5, "MIMO"),
    (4, 3, 2, 8.0, None, 1.0, 0.25, "MIMO"),
    (4, 2, 3, 4.0, None, 0.25, 0.25, "MIMO"),
    (2, 1, 2, 2.0, None, 0.5, 0.5, "Distributed"),
    (3, 1, 3, 3.0, 1.5, 0.25, 0.25, "Distributed"),
    (4, 2, 2, 4.0, None, 0.25, 0.25, "Distributed"),
    (4, 2, 3, 4.0, 1.2, 0.25, 0.25, "Distributed"),
    (4, 1, 6, 2.0, 0.7, 0.5, 0.5, "Distributed"),
]


def cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def matrices(L, G, per, P0, pa, s_ant, s_user, topo, f, g, powers):
    """Per-user (A, C, noise) and the list of (Q, b) power constraints."""
    users = [(k, i) for k in range(G) for i in range(per)]
    S = s_ant * np.eye(L)
    A, C = [], []
    if topo == "MIMO":
        I = np.eye(L)
        for u, (k, _) in enumerate(users):
            gg = np.outer(g[u], g[u].conj())
            A.append(powers[k] * np.kron(np.outer(f[k], f[k].conj()).conj(), gg))
            c = np.kron(S, gg)
            for j in range(G):
                if j != k:
                    c = c + powers[j] * np.kron(np.outer(f[j], f[j].conj()).conj(), gg)
            C.append(c)
        R = S + sum(powers[j] * np.outer(f[j], f[j].conj()) for j in range(G))
        cons = [(np.kron(R.conj(), I), P0)]
        if pa is not None:
            for l in range(L):
                E = np.zeros((L, L))
                E[l, l] = 1.0
                cons.append((np.kron(R.conj(), E), pa))
    else:
        for u, (k, _) in enumerate(users):
            a = f[k] * g[u].conj()
            A.append(powers[k] * np.outer(a, a.conj()))
            c = np.diag(np.abs(g[u]) ** 2 * s_ant).astype(complex)
            for j in range(G):
                if j != k:
                    b = f[j] * g[u].conj()
                    c = c + powers[j] * np.outer(b, b.conj())
            C.append(c)
        cons = [(np.eye(L), P0)]
        if pa is not None:
            for l in range(L):
                E = np.zeros((L, L))
                E[l, l] = 1.0
                cons.append((E, pa))
    return A, C, [s_user] * len(users), cons


def min_power_ratio(A, C, noise, cons, gamma):
    """min t s.t. SINR >= gamma for all users and Q_s.W <= t b_s."""
    n = A[0].shape[0]
    W = cp.Variable((n, n), hermitian=True)
    t = cp.Variable()
    tr = lambda M: cp.real(cp.trace(M @ W))
    c = [W >> 0]
    c += [tr(a) - gamma * tr(cc) >= gamma * s for a, cc, s in zip(A, C, noise)]
    c += [tr(q) <= t * b for q, b in cons]
    prob = cp.Problem(cp.Minimize(t), c)
    try:
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-9, tol_gap_rel=1e-9, tol_feas=1e-9)
    except cp.error.SolverError:
        # past the noise-limited SINR ceiling the program is infeasible for
        # every t, which the tight-tolerance run can report as a failure
        try:
            prob.solve(solver=cp.CLARABEL)
        except cp.error.SolverError:
            return np.inf
    return prob.value if prob.status in ("optimal", "optimal_inaccurate") else np.inf


def solve(A, C, noise, cons):
    # gamma is feasible iff the required power ratio is <= 1; upper bound from
    # the total-power constraint: A.W <= lambda_max(A) tr(W)
    q0, b0 = cons[0]
    tr_max = b0 / np.linalg.eigvalsh(q0).min()
    hi = min(np.linalg.eigvalsh(a).max() * tr_max / s for a, s in zip(A, noise))
    lo = 0.0
    while hi - lo > 1e-8 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if min_power_ratio(A, C, noise, cons, mid) <= 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def pairs(v):
    return [[float(z.real), float(z.imag)] for z in v]


def main():
    rng = np.random.default_rng(20240611)
    out = []
    for idx, (L, G, per, P0, pa, s_ant, s_user, topo) in enumerate(CASES):
        powers = [1.0] * G
        f = [cn(rng, L) for _ in range(G)]
        g = [cn(rng, L) for _ in range(G * per)]
        A, C, noise, cons = matrices(L, G, per, P0, pa, s_ant, s_user, topo, f, g, powers)
        gamma = solve(A, C, noise, cons)
        config = {
            "num_relay_antennas": L,
            "num_groups": G,
            "group_sizes": [per] * G,
            "tx_powers": powers,
            "relay_noise_vars": [s_ant] * L,
            "user_noise_vars": [s_user] * (G * per),
            "total_power_budget": P0,
            "per_antenna_budgets": None if pa is None else [pa] * L,
            "topology": topo,
        }
        out.append({"name": f"case{idx:02d}", "config": config, "f": [pairs(v) for v in f],
                    "g": [pairs(v) for v in g], "gamma_star": gamma})
        print(f"case{idx:02d} {topo:11s} L={L} G={G} M={G * per} gamma*={gamma:.10g}")
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps({"solver": f"cvxpy {cp.__version__} / CLARABEL", "instances": out}, indent=1) + "\n")


if __name__ == "__main__":
    main()
