"""Randomized invariant suite behind ``grc-attn verify``.

Each check draws ``trials`` seeded instances and records the largest
violation it saw together with the trial that produced it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import attention as att
from . import baselines as bl
from . import model as mdl
from . import numerics as nx

FAULTS = ("dual-sign",)


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float
    worst_trial: int

    @property
    def passed(self):
        return self.max_error <= self.tolerance

    def line(self, seed):
        status = "ok  " if self.passed else "FAIL"
        where = "" if self.passed else f"  (seed {seed}, trial {self.worst_trial})"
        return f"{status} {self.name:<22} max_error={self.max_error:.3e} tol={self.tolerance:.0e}{where}"


@dataclass
class VerifyReport:
    seed: int
    trials: int
    results: list

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def text(self):
        lines = [f"verify seed={self.seed} trials={self.trials}"]
        lines += [r.line(self.seed) for r in self.results]
        lines.append("all invariants hold" if self.passed else "invariant violation")
        return "\n".join(lines) + "\n"


def random_gates(rng, T):
    z = rng.uniform(0.0, 1.0, size=T)
    # exercise the saturated ends now and then
    z[rng.uniform(size=T) < 0.05] = 0.0
    z[rng.uniform(size=T) < 0.05] = 1.0
    z[0] = 1.0
    return z


def random_simplex(rng, T, margin=1e-9):
    while True:
        a = rng.dirichlet(np.full(T, rng.uniform(0.2, 2.0)))
        if 1.0 - np.sum(a[1:]) > margin and a[0] > margin:
            return a


def _worst(name, tol, errors):
    errors = [0.0 if e is None else float(e) for e in errors]
    i = int(np.argmax(errors)) if errors else 0
    return CheckResult(name, errors[i] if errors else 0.0, tol, i)


def _rng(seed, trial, check):
    return np.random.default_rng([seed, trial, check])


def check_duality(seed, trials, fault=None):
    errs = []
    for k in range(trials):
        rng = _rng(seed, k, 1)
        T, d = int(rng.integers(1, 65)), int(rng.integers(1, 17))
        h = rng.normal(size=(T, d))
        z = random_gates(rng, T)
        alpha = att.dual_weights(z)
        if fault == "dual-sign":
            alpha = alpha.copy()
            alpha[-1] = -alpha[-1]
        errs.append(np.max(np.abs(att.grc_recurse(h, z).final - att.gsa_context(alpha, h))))
    return _worst("duality", 1e-12, errs)


def check_simplex(seed, trials):
    errs = []
    for k in range(trials):
        rng = _rng(seed, k, 2)
        a = att.dual_weights(random_gates(rng, int(rng.integers(1, 65))))
        errs.append(max(abs(np.sum(a) - 1.0), -min(0.0, a.min()), max(0.0, a.max() - 1.0)))
    return _worst("simplex", 1e-12, errs)


def check_round_trip(seed, trials):
    errs = []
    for k in range(trials):
        rng = _rng(seed, k, 3)
        a = random_simplex(rng, int(rng.integers(1, 65)))
        errs.append(np.max(np.abs(att.dual_weights(att.inverse_dual(a)) - a)))
    return _worst("round_trip", 1e-9, errs)


def check_saturated_inverse(seed, trials):
    """Leading zero weights hit the zero branch; the result must still be a gate sequence."""
    errs = []
    for k in range(trials):
        rng = _rng(seed, k, 4)
        T = int(rng.integers(2, 33))
        a = np.zeros(T)
        lead = int(rng.integers(1, T))
        a[lead:] = rng.dirichlet(np.ones(T - lead))
        z = att.inverse_dual(a)
        bad = abs(z[0] - 1.0) + max(0.0, -z.min()) + max(0.0, z.max() - 1.0)
        errs.append(bad + np.max(np.abs(att.dual_weights(z) - a)))
    return _worst("saturated_inverse", 1e-9, errs)


def check_decgrc_monotone(seed, trials):
    errs = []
    for k in range(trials):
        rng = _rng(seed, k, 5)
        T = int(rng.integers(1, 65))
        scale = [1.0, 50.0, 700.0][k % 3]
        e = rng.uniform(-scale, scale, size=T)
        with np.errstate(over="raise"):
            z = att.decgrc_gates(e)
        bad = 0.0 if np.all(np.isfinite(z)) else math.inf
        bad += abs(z[0] - 1.0) + max(0.0, -z.min()) + max(0.0, z.max() - 1.0)
        if T > 1:
            bad += max(0.0, float(np.max(np.diff(z[1:]), initial=0.0)))
        errs.append(bad)
    return _worst("decgrc_monotone", 0.0, errs)


def check_decgrc_direct(seed, trials):
    errs = []
    for k in range(trials):
        rng = _rng(seed, k, 6)
        e = rng.uniform(-50.0, 50.0, size=int(rng.integers(1, 65)))
        z, ref = att.decgrc_gates(e), att.decgrc_gates_direct(e)
        errs.append(np.max(np.abs(z - ref) / ref))
    return _worst("decgrc_stable", 1e-12, errs)


def check_convergence(seed, trials):
    """``|d_T - d_t*| <= nu (T - t*) max_t(|h_t| + |d_t|)`` once later gates are <= nu."""
    errs = []
    for k in range(trials):
        rng = _rng(seed, k, 7)
        T, d = int(rng.integers(2, 65)), int(rng.integers(1, 17))
        h = rng.normal(size=(T, d))
        e = rng.normal(scale=2.0, size=T) + np.linspace(-3.0, 3.0, T)
        z = att.decgrc_gates(e)
        D = att.grc_recurse(h, z).d
        scale = np.max(np.max(np.abs(h), axis=1) + np.max(np.abs(D), axis=1))
        worst = 0.0
        for nu in (1e-3, 1e-2, 1e-1):
            for t_star in range(1, T + 1):
                if np.all(z[t_star:] <= nu):
                    lhs = np.max(np.abs(D[-1] - D[t_star - 1]))
                    worst = max(worst, lhs - nu * (T - t_star) * scale)
        errs.append(worst)
    return _worst("convergence_bound", 0.0, errs)


def check_smocha(seed, trials):
    errs = []
    for k in range(trials):
        rng = _rng(seed, k, 8)
        p = rng.uniform(size=int(rng.integers(1, 65)))
        errs.append(np.max(np.abs(bl.smocha_alpha(p) - bl.smocha_via_dual(p))))
    return _worst("smocha_dual", 1e-12, errs)


def check_mocha_mass(seed, trials):
    errs = []
    for k in range(trials):
        rng = _rng(seed, k, 9)
        T = int(rng.integers(1, 65))
        alpha = rng.uniform(size=T)
        alpha *= rng.uniform(0.1, 1.0) / alpha.sum()
        e = rng.normal(scale=3.0, size=T)
        w = int(rng.integers(1, 9))
        beta = bl.mocha_train_beta(alpha, e, w)
        errs.append(abs(np.sum(beta) - np.sum(alpha)))
    return _worst("mocha_mass", 1e-9, errs)


def check_primitive_gradients(seed, trials):
    errs = []
    for k in range(trials):
        rng = _rng(seed, k, 10)
        T, d = int(rng.integers(2, 8)), int(rng.integers(1, 4))
        h = rng.uniform(-2, 2, size=(T, d))
        probe = rng.normal(size=d)

        def grc(P):
            z = nx.grc_gates(P["e"])
            return nx.total(nx.mul(nx.grc_context(P["h"], z), probe))

        def dec(P):
            return nx.total(nx.mul(nx.decgrc_gates(P["e"]), rng_w))

        rng_w = rng.normal(size=T)
        params = {"e": rng.uniform(-2, 2, size=T), "h": h}
        errs.append(nx.grad_check(grc, params))
        errs.append(nx.grad_check(dec, {"e": params["e"]}))
        ds, da = 2, 3
        sp = {
            "v": rng.uniform(-2, 2, da), "W": rng.uniform(-1, 1, (da, ds + d + 1)),
            "eta": rng.uniform(-1, 1, da), "vb": rng.uniform(-1, 1, d),
            "s": rng.uniform(-2, 2, ds), "H": h,
        }
        cum = rng.uniform(0, 2, size=T)
        errs.append(nx.grad_check(
            lambda P: nx.total(nx.mul(att.additive_scores(
                P["v"], P["W"], P["eta"], P["vb"], P["s"], P["H"], cum), rng_w)),
            sp,
        ))
    return _worst("primitive_gradients", 1e-5, errs)


def check_model_gradients(seed, kinds=("gsa", "grc", "decgrc", "windowed:2", "mocha:2")):
    """End-to-end CE gradient of each attention kind on a 3-token toy."""
    dims = mdl.ModelDims(vocab=5, feat=3, enc=3, dec=3, att=3, emb=2, lookahead=1, stride=2)
    errs = []
    for i, name in enumerate(kinds):
        rng = _rng(seed, i, 11)
        kind = mdl.AttentionKind.parse(name)
        p = mdl.init_params(dims, kind, seed)
        arrays = {k: v + rng.normal(scale=0.3, size=v.shape) for k, v in p.arrays.items()}
        x = rng.normal(size=(7, 3))
        y = [int(t) for t in rng.integers(1, 5, size=2)] + [mdl.EOS]
        errs.append(nx.grad_check(lambda P: mdl.sequence_nll(P, dims, kind, x, y), arrays))
    return _worst("model_gradients", 1e-4, errs)


def run(seed=0, trials=200, fault=None) -> VerifyReport:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}")
    grad_trials = min(trials, 5)
    results = [
        check_duality(seed, trials, fault),
        check_simplex(seed, trials),
        check_round_trip(seed, trials),
        check_saturated_inverse(seed, trials),
        check_decgrc_monotone(seed, trials),
        check_decgrc_direct(seed, trials),
        check_convergence(seed, trials),
        check_smocha(seed, trials),
        check_mocha_mass(seed, trials),
        check_primitive_gradients(seed, grad_trials),
        check_model_gradients(seed),
    ]
    return VerifyReport(seed, trials, results)
