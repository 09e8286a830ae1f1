"""Linear stability analysis at equilibria of the fast dynamics.

The flat state is every eps block (population order) followed by every v
block; its RHS is network.fast_rhs_flat.  The analytic Jacobian is
assembled block-wise from the canonical equations, including the
second-derivative term that enters through sigma'(v) multiplying the
correction current.  Eigenvalues come from a dense general eigensolver.

Because trained networks carry modes with |Re(lambda)| down to 1e-4,
driving the derivative residual to a tight tolerance by simulation alone
would take thousands of simulated seconds; analyze_equilibrium therefore
interleaves relaxation stretches with trust-region root polishing and
verifies the residual at the final state against the tolerance.
"""

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .activations import Activation
from .errors import (ConstructionError, ContractViolationError,
                     IntegrationDivergenceError, NonDifferentiableStateError,
                     NotAnEquilibriumError)
KINK_MARGIN = 1e-8


def _check_frozen(net):
    if not net.weights_frozen:
        raise ContractViolationError("freeze weights before linearizing")


def _split_state(net, state):
    state = np.asarray(state, dtype=float)
    T = net.total_units
    if state.shape != (2 * T,):
        raise ConstructionError(f"state length {state.shape} != ({2 * T},)")
    offs, at = [], 0
    for p in net.populations:
        offs.append(at)
        at += p.size
    E = [state[offs[i]:offs[i] + p.size] for i, p in enumerate(net.populations)]
    V = [state[T + offs[i]:T + offs[i] + p.size]
         for i, p in enumerate(net.populations)]
    return E, V, offs, T


def jacobian_analytic(net, state):
    """Exact Jacobian of the unclamped fast dynamics at the given flat
    state.  ReLU states within 1e-8 of a kink are refused since the
    derivative is not defined there."""
    _check_frozen(net)
    E, V, offs, T = _split_state(net, state)
    h = net.hyper
    for i, p in enumerate(net.populations):
        if p.activation is Activation.RELU and np.any(np.abs(V[i]) < KINK_MARGIN):
            raise NonDifferentiableStateError(
                f"population {i} has a value within {KINK_MARGIN} of the ReLU kink")

    J = np.zeros((2 * T, 2 * T))
    eb = lambda i: slice(offs[i], offs[i] + net.populations[i].size)
    vb = lambda i: slice(T + offs[i], T + offs[i] + net.populations[i].size)

    for i, p in enumerate(net.populations):
        idx = np.arange(offs[i], offs[i] + p.size)
        # d(eps_i)/d(eps_i) and the direct v_i coupling
        J[idx, idx] += -h.zeta / h.tau_e
        J[idx, T + idx] += 1.0 / h.tau_e
        # prediction coupling: eps_i depends on v_src through M sigma(v)
        c = net.connections[net.incoming[i]]
        gain = net.populations[c.src].activation.derivative(V[c.src])
        J[eb(i), vb(c.src)] += -(c.M * gain[None, :]) / h.tau_e
        # value equation: -eps_i plus corrections through outgoing W
        J[T + idx, idx] += -1.0 / h.tau_v
        gp = p.activation.derivative(V[i])
        gpp = p.activation.second_derivative(V[i])
        corr = np.zeros(p.size)
        for k in net.outgoing[i]:
            cc = net.connections[k]
            J[vb(i), eb(cc.dst)] += (gp[:, None] * cc.W) / h.tau_v
            corr += cc.W @ E[cc.dst]
        J[T + idx, T + idx] += (gpp * corr) / h.tau_v
    return J


def jacobian_fd(net, state, h: float = 1e-5):
    """Central-difference Jacobian of the same RHS, for cross-checking."""
    _check_frozen(net)
    if not 1e-7 <= h <= 1e-3:
        raise ConstructionError("finite-difference h must lie in [1e-7, 1e-3]")
    state = np.asarray(state, dtype=float)
    n = state.size
    net.fast_rhs_flat(state)   # validates the length
    J = np.empty((n, n))
    for j in range(n):
        hi = state.copy()
        lo = state.copy()
        hi[j] += h
        lo[j] -= h
        col = (net.fast_rhs_flat(hi) - net.fast_rhs_flat(lo)) / (2.0 * h)
        if not np.all(np.isfinite(col)):
            raise IntegrationDivergenceError(0, "non-finite RHS during FD probe")
        J[:, j] = col
    return J


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    tau: float
    max_real_part: float
    count_at_minus_half_tau: int
    count_near_minus_one: int
    near_zero: list
    all_stable: bool
    residual: float = float("nan")
    distance_to_target: float = float("nan")


def classify_spectrum(eigs, tau: float, residual: float = float("nan"),
                      distance_to_target: float = float("nan")) -> SpectrumReport:
    """Sort and bucket an eigenvalue list.

    The -1/(2 tau) bucket counts eigenvalues whose real part is within
    1% of -1/(2 tau).  The bulk of the spectrum is complex pairs whose
    real part sits exactly there while the imaginary parts spread, so
    counting by the full complex distance would register nothing; the
    decay-rate reading is the one the multiplicity claim is about.
    """
    eigs = np.asarray(eigs, dtype=complex)
    order = np.lexsort((-eigs.imag, -eigs.real))
    eigs = eigs[order]
    half = 1.0 / (2.0 * tau)
    count_half = int(np.sum(np.abs(eigs.real + half) / half < 0.01))
    count_m1 = int(np.sum(np.abs(eigs + 1.0) < 0.1))
    near_zero = [complex(z) for z in eigs[np.abs(eigs.real) < 0.1]]
    return SpectrumReport(
        eigenvalues=eigs,
        tau=tau,
        max_real_part=float(np.max(eigs.real)),
        count_at_minus_half_tau=count_half,
        count_near_minus_one=count_m1,
        near_zero=near_zero,
        all_stable=bool(np.max(eigs.real) < 0.0),
        residual=residual,
        distance_to_target=distance_to_target,
    )


def _sup(x) -> float:
    return float(np.max(np.abs(x)))


def _newton_polish(net, s):
    """Root-polish the fast RHS from s; returns (state, residual).

    Near-marginal slow modes leave the Jacobian close to singular, which
    defeats plain Newton; MINPACK's dogleg trust-region handles the
    ill-conditioned directions.  Falls back to the starting state if the
    solver wanders somewhere non-finite.
    """
    sol = scipy.optimize.root(net.fast_rhs_flat, s,
                              jac=lambda x: jacobian_analytic(net, x),
                              method="hybr", options={"xtol": 1e-14})
    if not np.all(np.isfinite(sol.x)):
        return s, _sup(net.fast_rhs_flat(s))
    return sol.x, _sup(net.fast_rhs_flat(sol.x))


def analyze_equilibrium(net, target, tol: float = 1e-8, *,
                        max_steps: int = 4000,
                        polish: bool = True) -> SpectrumReport:
    """Place the values at target, relax to the nearby equilibrium, and
    return the classified spectrum of the Jacobian there.

    The equilibrium the dynamics settle into need not be close to the
    requested target (untrained networks drift far away); callers that
    care should look at distance_to_target on the report.
    """
    _check_frozen(net)
    if not tol > 0:
        raise ConstructionError("tol must be positive")
    net.unclamp_all()
    net.set_values(target)
    for p in net.populations:
        p.eps = np.zeros(p.size)
    result = net.run_fast_to_equilibrium(tol, max_steps)
    s = net.fast_state()
    residual = result.residual
    eigs = None
    if polish and not residual < tol:
        # The drift along near-marginal directions can take thousands of
        # simulated seconds to die out, so simulation alone rarely makes
        # a tight tolerance.  Probe with Newton from relaxation
        # snapshots of geometrically growing length; the simulated flow
        # stays authoritative, so a stalled probe is simply dropped.  A
        # probe that lands on an unstable root while the flow is still
        # moving found a saddle the trajectory passes near, not the
        # equilibrium it is heading to; keep relaxing instead.
        chunk = max(1, max_steps)
        for _ in range(8):
            try:
                s_probe, res_probe = _newton_polish(net, s)
            except NonDifferentiableStateError:
                # solver trial point grazed a ReLU kink; drop the probe
                s_probe, res_probe = s, residual
            if res_probe < tol:
                J = jacobian_analytic(net, s_probe)
                cand = np.linalg.eigvals(J)
                if np.max(cand.real) < 0.0 or residual < tol:
                    s, residual, eigs = s_probe, res_probe, cand
                    net.set_fast_state(s)
                    break
            net.set_fast_state(s)
            result = net.run_fast_to_equilibrium(tol, chunk)
            s = net.fast_state()
            residual = result.residual
            if residual < tol:
                break
            chunk *= 2
    if not residual < tol:
        raise NotAnEquilibriumError(residual)
    target = np.asarray(target, dtype=float)
    dist = float(np.linalg.norm(net.values_vector() - target))
    if eigs is None:
        eigs = np.linalg.eigvals(jacobian_analytic(net, s))
    return classify_spectrum(eigs, net.hyper.tau, residual, dist)


def spectrum_to_csv(report: SpectrumReport) -> str:
    lines = ["re,im"]
    for z in report.eigenvalues:
        lines.append(f"{z.real:.10g},{z.imag:.10g}")
    lines.append(
        f"# summary max_real_part={report.max_real_part:.10g} "
        f"count_at_minus_half_tau={report.count_at_minus_half_tau} "
        f"count_near_minus_one={report.count_near_minus_one} "
        f"near_zero={len(report.near_zero)} "
        f"all_stable={report.all_stable} "
        f"residual={report.residual:.10g} "
        f"distance_to_target={report.distance_to_target:.10g}")
    return "\n".join(lines) + "\n"
