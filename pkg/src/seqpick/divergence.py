"""f-divergences and numerical certification of the picking-suboptimality bound.

All divergences operate on dense probability tables. Support mismatches
produce an explicit ``math.inf`` sentinel, never overflow, so vacuously
satisfied bounds are distinguishable from bugs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tabular import TabularPolicy, random_mdp, random_policy, visitation_set, expected_return

INF = math.inf
_EQ_TOL = 1e-10
_BOUND_TOL = 1e-9


@dataclass(frozen=True)
class DivergenceReport:
    """Two sides of a checked (in)equality plus named intermediates."""

    lhs: float
    rhs: float
    satisfied: bool
    slack: float
    detail: dict = field(default_factory=dict)


def _as_dist(p, name, check_norm=True):
    p = np.asarray(p, dtype=np.float64).ravel()
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    if check_norm and abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} must sum to 1, got {p.sum()!r}")
    return p


def _check_lengths(p, q):
    if p.shape != q.shape:
        raise ValueError(f"distribution length mismatch: {p.shape} vs {q.shape}")


def d_tv(p, q):
    """Total variation distance, 0.5 * sum |p - q|."""
    p = _as_dist(p, "p")
    q = _as_dist(q, "q")
    _check_lengths(p, q)
    return 0.5 * float(np.abs(p - q).sum())


def _kl_raw(p, q):
    # sum over p>0 of p log(p/q); inf where p>0 and q=0; works on any
    # nonnegative tables of equal shape (no normalization assumed).
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    sup = p > 0.0
    if np.any(q[sup] == 0.0):
        return INF
    ps, qs = p[sup], q[sup]
    return float(np.sum(ps * np.log(ps / qs)))


def d_kl(p, q):
    """KL divergence; +inf sentinel on support violation."""
    p = _as_dist(p, "p")
    q = _as_dist(q, "q")
    _check_lengths(p, q)
    return _kl_raw(p, q)


def _chi2_raw(p, q):
    # sum over q>0 of (p-q)^2/q; inf where p>0 and q=0; any nonneg tables.
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    if np.any(p[q == 0.0] > 0.0):
        return INF
    sup = q > 0.0
    ps, qs = p[sup], q[sup]
    return float(np.sum((ps - qs) ** 2 / qs))


def d_chi2(p, q):
    """Pearson chi-squared divergence; +inf sentinel on support violation.

    When finite, cross-checks the expansion sum p^2/q - 1 to 1e-10.
    """
    p = _as_dist(p, "p")
    q = _as_dist(q, "q")
    _check_lengths(p, q)
    val = _chi2_raw(p, q)
    if math.isfinite(val):
        sup = q > 0.0
        alt = float(np.sum(p[sup] ** 2 / q[sup])) - 1.0
        assert abs(val - alt) <= 1e-10 * max(1.0, abs(val)), (val, alt)
    return val


def check_pinsker_chain(p, q):
    """Check 2 TV^2 <= KL <= chi^2 for a pair of distributions."""
    tv = d_tv(p, q)
    kl = d_kl(p, q)
    chi2 = d_chi2(p, q)
    vacuous = not (math.isfinite(kl) and math.isfinite(chi2))
    lhs = 2.0 * tv * tv
    ok = (lhs <= kl + _BOUND_TOL) and (kl <= chi2 + _BOUND_TOL)
    return DivergenceReport(
        lhs=lhs, rhs=chi2, satisfied=ok, slack=chi2 - lhs,
        detail={"tv": tv, "kl": kl, "chi2": chi2, "vacuous": vacuous})


def _conditional_kl(vs_theta, vs_e):
    """E_{rho_theta(s,a,s')} [ log rho_theta(a|s,s') / rho_e(a|s,s') ]."""
    w = vs_theta.rho_sas
    sup = w > 0.0
    pt = vs_theta.rho_a_given_ss
    pe = vs_e.rho_a_given_ss
    if np.any(pe[sup] == 0.0):
        return INF
    return float(np.sum(w[sup] * np.log(pt[sup] / pe[sup])))


def _conditional_chi2(vs_theta, vs_e):
    """rho_theta(s,s')-weighted expectation of per-(s,s') chi^2 values."""
    total = 0.0
    weights = vs_theta.rho_ss
    pt = vs_theta.rho_a_given_ss
    pe = vs_e.rho_a_given_ss
    sup = np.argwhere(weights > 0.0)
    for s, s2 in sup:
        val = _chi2_raw(pt[s, :, s2], pe[s, :, s2])
        if not math.isfinite(val):
            return INF
        total += weights[s, s2] * val
    return total


def lemma2_check(mdp, pi_theta, pi_E):
    """KL over joint (s,a,s') tables equals KL over (s,a) occupancies."""
    vt = visitation_set(mdp, pi_theta)
    ve = visitation_set(mdp, pi_E)
    kl_joint = _kl_raw(vt.rho_sas, ve.rho_sas)
    kl_mu = _kl_raw(vt.mu, ve.mu)
    finite = math.isfinite(kl_joint) and math.isfinite(kl_mu)
    if finite:
        ok = abs(kl_joint - kl_mu) <= _EQ_TOL
        slack = kl_mu - kl_joint
    else:
        ok = (kl_joint == kl_mu)  # both infinite counts as agreement
        slack = 0.0 if ok else INF
    return DivergenceReport(lhs=kl_joint, rhs=kl_mu, satisfied=ok, slack=slack,
                            detail={"finite": finite})


def lemma3_check(mdp, pi_theta, pi_E):
    """KL(mu) decomposes into conditional action KL plus transition KL."""
    vt = visitation_set(mdp, pi_theta)
    ve = visitation_set(mdp, pi_E)
    kl_mu = _kl_raw(vt.mu, ve.mu)
    kl_cond = _conditional_kl(vt, ve)
    kl_ss = _kl_raw(vt.rho_ss, ve.rho_ss)
    rhs = kl_cond + kl_ss
    finite = all(map(math.isfinite, (kl_mu, kl_cond, kl_ss)))
    if finite:
        ok = abs(kl_mu - rhs) <= _EQ_TOL
        slack = rhs - kl_mu
    else:
        ok = (kl_mu == rhs)
        slack = 0.0 if ok else INF
    return DivergenceReport(lhs=kl_mu, rhs=rhs, satisfied=ok, slack=slack,
                            detail={"kl_cond": kl_cond, "kl_ss": kl_ss, "finite": finite})


def theorem1_bound(mdp, pi_theta, pi_E):
    """|J(pi_E) - J(pi_theta)| bounded by the chi^2 transition terms."""
    vt = visitation_set(mdp, pi_theta)
    ve = visitation_set(mdp, pi_E)
    lhs = abs(expected_return(mdp, pi_E) - expected_return(mdp, pi_theta))
    chi_cond = _conditional_chi2(vt, ve)
    chi_ss = _chi2_raw(vt.rho_ss, ve.rho_ss)
    total = chi_cond + chi_ss
    if math.isfinite(total):
        rhs = math.sqrt(2.0) * mdp.r_max / (1.0 - mdp.gamma) * math.sqrt(total)
        vacuous = False
    else:
        rhs = INF
        vacuous = True
    ok = lhs <= rhs + _BOUND_TOL
    return DivergenceReport(lhs=lhs, rhs=rhs, satisfied=ok, slack=rhs - lhs,
                            detail={"chi2_cond": chi_cond, "chi2_ss": chi_ss,
                                    "vacuous": vacuous})


def lsgan_optimal_discriminator(rho_E, rho_theta, a=-1.0, b=1.0):
    """Closed-form optimal squared-loss discriminator over (s,s') tables.

    Returns an array with NaN where rho_E + rho_theta == 0 (undefined).
    """
    if not a < b:
        raise ValueError("requires a < b")
    rho_E = np.asarray(rho_E, dtype=np.float64)
    rho_theta = np.asarray(rho_theta, dtype=np.float64)
    denom = rho_E + rho_theta
    d_star = np.full(denom.shape, np.nan)
    sup = denom > 0.0
    d_star[sup] = (b * rho_E[sup] + a * rho_theta[sup]) / denom[sup]
    return d_star


def lsgan_discriminator_objective(D, rho_E, rho_theta, a=-1.0, b=1.0):
    """0.5 E_rhoE[(D-b)^2] + 0.5 E_rhoTheta[(D-a)^2], ignoring off-support cells."""
    rho_E = np.asarray(rho_E, dtype=np.float64)
    rho_theta = np.asarray(rho_theta, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    sup = (rho_E + rho_theta) > 0.0
    return 0.5 * float(np.sum(rho_E[sup] * (D[sup] - b) ** 2)
                       + np.sum(rho_theta[sup] * (D[sup] - a) ** 2))


def lsgan_chi2_identity(rho_E, rho_theta):
    """Generator cost at the optimal discriminator equals a chi^2 divergence.

    With labels (b, a, c) = (1, -1, 0) satisfying b - c = 1 and b - a = 2:
        2 C(pi_theta) = chi^2(2 rho_theta || rho_E + rho_theta).
    """
    b, a, c = 1.0, -1.0, 0.0
    rho_E = np.asarray(rho_E, dtype=np.float64)
    rho_theta = np.asarray(rho_theta, dtype=np.float64)
    d_star = lsgan_optimal_discriminator(rho_E, rho_theta, a=a, b=b)
    sup = (rho_E + rho_theta) > 0.0
    two_c = float(np.sum(rho_E[sup] * (d_star[sup] - c) ** 2)
                  + np.sum(rho_theta[sup] * (d_star[sup] - c) ** 2))
    rhs = _chi2_raw(2.0 * rho_theta, rho_E + rho_theta)
    ok = abs(two_c - rhs) <= _BOUND_TOL
    return DivergenceReport(lhs=two_c, rhs=rhs, satisfied=ok, slack=rhs - two_c,
                            detail={"labels": (a, b, c)})


def certify(n_instances=1000, seed=0, max_states=10, max_actions=5,
            gammas=(0.5, 0.9, 0.95), n_pinsker=1000, n_lsgan=100):
    """Full randomized certification sweep; returns a JSON-ready report.

    Instances use smoothed Dirichlet sampling (strictly positive rows) so
    all divergences stay finite; deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    report = {
        "n_instances": n_instances,
        "theorem1_violations": 0,
        "theorem1_min_slack": INF,
        "theorem1_zero_policy_gap_checks": 0,
        "lemma2_max_error": 0.0,
        "lemma3_max_error": 0.0,
        "pinsker_checked": n_pinsker,
        "pinsker_violations": 0,
        "lsgan_checked": n_lsgan,
        "lsgan_max_error": 0.0,
        "slacks": [],
    }
    for i in range(n_instances):
        n_s = int(rng.integers(2, max_states + 1))
        n_a = int(rng.integers(1, max_actions + 1))
        gamma = float(gammas[int(rng.integers(len(gammas)))])
        mdp = random_mdp(n_s, n_a, gamma, seed=int(rng.integers(2**31)), min_prob=0.02)
        pi_t = random_policy(n_s, n_a, seed=int(rng.integers(2**31)), min_prob=0.02)
        pi_e = random_policy(n_s, n_a, seed=int(rng.integers(2**31)), min_prob=0.02)

        rep = theorem1_bound(mdp, pi_t, pi_e)
        if not rep.satisfied:
            report["theorem1_violations"] += 1
        report["theorem1_min_slack"] = min(report["theorem1_min_slack"], rep.slack)
        report["slacks"].append(rep.slack)

        rep2 = lemma2_check(mdp, pi_t, pi_e)
        report["lemma2_max_error"] = max(report["lemma2_max_error"], abs(rep2.rhs - rep2.lhs))
        rep3 = lemma3_check(mdp, pi_t, pi_e)
        report["lemma3_max_error"] = max(report["lemma3_max_error"], abs(rep3.rhs - rep3.lhs))

    for _ in range(n_pinsker):
        dim = int(rng.integers(2, 21))
        p = rng.dirichlet(np.ones(dim))
        q = (rng.dirichlet(np.ones(dim)) + 0.01) / (1.0 + 0.01 * dim)
        if not check_pinsker_chain(p, q).satisfied:
            report["pinsker_violations"] += 1

    for _ in range(n_lsgan):
        cells = int(rng.integers(4, 21))
        rho_e = rng.dirichlet(np.ones(cells))
        rho_t = rng.dirichlet(np.ones(cells))
        rep = lsgan_chi2_identity(rho_e, rho_t)
        report["lsgan_max_error"] = max(report["lsgan_max_error"], abs(rep.rhs - rep.lhs))

    report["ok"] = (report["theorem1_violations"] == 0
                    and report["pinsker_violations"] == 0
                    and report["lemma2_max_error"] < _EQ_TOL
                    and report["lemma3_max_error"] < _EQ_TOL
                    and report["lsgan_max_error"] < _BOUND_TOL)
    return report
