"""Recurrent predictive-coding network core.

A network is a set of value populations joined by directed connections.
Each population i carries a value vector v_i and an error vector eps_i.
Every population is predicted by exactly one other population (possibly
itself) through prediction weights M and a bias b; errors travel back
along the same edge through correction weights W.

Fast dynamics (Euler-integrated with step dt, time constant tau):

    tau * d(eps_i)/dt = v_i - mu_i - zeta * eps_i
    tau * d(v_i)/dt   = -eps_i + sigma'(v_i) * sum_c W_c @ eps_dst(c)

where mu_i = M @ sigma(v_src) + b for the one connection predicting i,
and the sum runs over connections whose predictor is i.  Slow dynamics
(learning) live in learning.py, linearization in stability.py.

Clamped populations have v pinned to clamp_target after every step while
eps keeps evolving, which is how training drives weight updates.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .activations import Activation
from .errors import ConstructionError, ContractViolationError, IntegrationDivergenceError

# state magnitudes beyond this are treated the same as inf/nan
DIVERGENCE_LIMIT = 1e100


@dataclass(frozen=True)
class Hyperparams:
    """Time constants and integration step.

    tau governs the fast (state) equations, gamma the slow (weight)
    equations; learning slower than inference means tau < gamma.  zeta
    is the leak on the error nodes.  The per-equation overrides default
    to the shared values and exist for exploration only.
    """

    tau: float = 1.0
    gamma: float = 100.0
    zeta: float = 1.0
    dt: float = 0.005
    tau_error: Optional[float] = None
    tau_value: Optional[float] = None
    gamma_prediction: Optional[float] = None
    gamma_correction: Optional[float] = None
    gamma_bias: Optional[float] = None

    def __post_init__(self):
        for name in ("tau", "gamma", "zeta", "dt"):
            if not getattr(self, name) > 0.0:
                raise ConstructionError(f"{name} must be positive")
        for name in ("tau_error", "tau_value", "gamma_prediction",
                     "gamma_correction", "gamma_bias"):
            val = getattr(self, name)
            if val is not None and not val > 0.0:
                raise ConstructionError(f"{name} must be positive when given")
        if not self.tau < self.gamma:
            raise ConstructionError("need tau < gamma (inference faster than learning)")
        if not self.dt < self.tau / 2.0:
            raise ConstructionError("need dt < tau/2 for a stable Euler step")

    @property
    def tau_e(self) -> float:
        return self.tau_error if self.tau_error is not None else self.tau

    @property
    def tau_v(self) -> float:
        return self.tau_value if self.tau_value is not None else self.tau

    @property
    def gamma_m(self) -> float:
        return self.gamma_prediction if self.gamma_prediction is not None else self.gamma

    @property
    def gamma_w(self) -> float:
        return self.gamma_correction if self.gamma_correction is not None else self.gamma

    @property
    def gamma_b(self) -> float:
        return self.gamma_bias if self.gamma_bias is not None else self.gamma


class Population:
    """One group of value units plus their error units."""

    def __init__(self, size: int, activation: Activation):
        if size < 1:
            raise ConstructionError("population size must be >= 1")
        self.size = size
        self.activation = activation
        self.v = np.zeros(size)
        self.eps = np.zeros(size)
        self.clamped = False
        self.clamp_target = None

    def clamp(self, target):
        target = np.asarray(target, dtype=float)
        if target.shape != (self.size,):
            raise ConstructionError(
                f"clamp target shape {target.shape} != ({self.size},)")
        self.clamped = True
        self.clamp_target = target.copy()
        self.v = target.copy()

    def unclamp(self):
        self.clamped = False
        self.clamp_target = None


class Connection:
    """Directed edge src -> dst: src predicts dst through M and b,
    dst's errors feed back to src through W."""

    def __init__(self, src: int, dst: int, M, W, b):
        self.src = src
        self.dst = dst
        self.M = np.asarray(M, dtype=float)
        self.W = np.asarray(W, dtype=float)
        self.b = np.asarray(b, dtype=float)


@dataclass
class EquilibriumResult:
    steps: int
    converged: bool
    residual: float


class Network:
    def __init__(self, populations, connections, hyper: Hyperparams,
                 tied: bool = False):
        if not populations:
            raise ConstructionError("need at least one population")
        self.populations = list(populations)
        self.connections = list(connections)
        self.hyper = hyper
        self.tied = tied
        self.weights_frozen = False
        self.steps_taken = 0

        n_pop = len(self.populations)
        self.incoming = [None] * n_pop   # conn index predicting population i
        self.outgoing = [[] for _ in range(n_pop)]
        for k, c in enumerate(self.connections):
            if not (0 <= c.src < n_pop and 0 <= c.dst < n_pop):
                raise ConstructionError("connection endpoint out of range")
            if self.incoming[c.dst] is not None:
                raise ConstructionError(
                    f"population {c.dst} has more than one incoming connection")
            self.incoming[c.dst] = k
            self.outgoing[c.src].append(k)
            ns, nd = self.populations[c.src].size, self.populations[c.dst].size
            if c.M.shape != (nd, ns):
                raise ConstructionError(f"M shape {c.M.shape} != ({nd}, {ns})")
            if c.W.shape != (ns, nd):
                raise ConstructionError(f"W shape {c.W.shape} != ({ns}, {nd})")
            if c.b.shape != (nd,):
                raise ConstructionError(f"b shape {c.b.shape} != ({nd},)")
        for i, k in enumerate(self.incoming):
            if k is None:
                raise ConstructionError(f"population {i} has no incoming connection")

    # ---- bookkeeping ----

    @property
    def total_units(self) -> int:
        return sum(p.size for p in self.populations)

    def values_vector(self):
        """All value nodes concatenated in population order."""
        return np.concatenate([p.v for p in self.populations])

    def split_values(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.total_units,):
            raise ConstructionError(
                f"vector length {x.shape} != ({self.total_units},)")
        out, at = [], 0
        for p in self.populations:
            out.append(x[at:at + p.size].copy())
            at += p.size
        return out

    def set_values(self, x):
        for p, part in zip(self.populations, self.split_values(x)):
            p.v = part

    def fast_state(self):
        """Flat fast state: every eps in population order, then every v."""
        return np.concatenate([p.eps for p in self.populations]
                              + [p.v for p in self.populations])

    def set_fast_state(self, s):
        s = np.asarray(s, dtype=float)
        T = self.total_units
        if s.shape != (2 * T,):
            raise ConstructionError(f"state length {s.shape} != ({2 * T},)")
        at = 0
        for p in self.populations:
            p.eps = s[at:at + p.size].copy()
            at += p.size
        for p in self.populations:
            p.v = s[at:at + p.size].copy()
            at += p.size

    def clamp_all(self, target):
        for p, part in zip(self.populations, self.split_values(target)):
            p.clamp(part)

    def unclamp_all(self):
        for p in self.populations:
            p.unclamp()

    # ---- dynamics ----

    def _predictions(self, V):
        """mu for every population given value arrays V (vectors or
        column-batched matrices)."""
        mu = [None] * len(self.populations)
        for i, k in enumerate(self.incoming):
            c = self.connections[k]
            sig = self.populations[c.src].activation.apply(V[c.src])
            b = c.b if np.ndim(V[i]) == 1 else c.b[:, None]
            mu[i] = c.M @ sig + b
        return mu

    def compute_prediction(self, conn_index: int):
        """Prediction the given connection currently makes for its dst."""
        c = self.connections[conn_index]
        sig = self.populations[c.src].activation.apply(self.populations[c.src].v)
        return c.M @ sig + c.b

    def fast_derivatives(self, V, E):
        """Time derivatives (dV, dE) of the fast equations at state (V, E).

        V and E are lists of per-population arrays, either shape (size,)
        or (size, B) for B independent runs sharing the weights.  Pure
        function of the arguments; network state is not touched.
        """
        h = self.hyper
        mu = self._predictions(V)
        dE = [(V[i] - mu[i] - h.zeta * E[i]) / h.tau_e
              for i in range(len(self.populations))]
        dV = []
        for i, p in enumerate(self.populations):
            corr = 0.0
            for k in self.outgoing[i]:
                c = self.connections[k]
                corr = corr + c.W @ E[c.dst]
            gain = p.activation.derivative(V[i])
            dV.append((-E[i] + gain * corr) / h.tau_v)
        return dV, dE

    def fast_rhs_flat(self, s):
        """RHS of the fast equations at flat state s (eps blocks then v
        blocks), ignoring clamps.  Used by linearization and solvers."""
        s = np.asarray(s, dtype=float)
        T = self.total_units
        if s.shape != (2 * T,):
            raise ConstructionError(f"state length {s.shape} != ({2 * T},)")
        E, V, at = [], [], 0
        for p in self.populations:
            E.append(s[at:at + p.size])
            at += p.size
        for p in self.populations:
            V.append(s[at:at + p.size])
            at += p.size
        dV, dE = self.fast_derivatives(V, E)
        return np.concatenate(dE + dV)

    def step_fast(self, algebraic_errors: bool = False):
        """One Euler step of the fast equations.

        With algebraic_errors=True the error nodes are not integrated;
        they are set to their instantaneous equilibrium (v - mu)/zeta
        before the value update, which turns the value dynamics into
        gradient descent on the energy when weights are tied.
        """
        h = self.hyper
        V = [p.v for p in self.populations]
        with np.errstate(over="ignore", invalid="ignore"):
            if algebraic_errors:
                mu = self._predictions(V)
                for i, p in enumerate(self.populations):
                    p.eps = (p.v - mu[i]) / h.zeta
                E = [p.eps for p in self.populations]
                dV, _ = self.fast_derivatives(V, E)
                for p, dv in zip(self.populations, dV):
                    p.v = p.v + h.dt * dv
            else:
                E = [p.eps for p in self.populations]
                dV, dE = self.fast_derivatives(V, E)
                for p, dv, de in zip(self.populations, dV, dE):
                    p.eps = p.eps + h.dt * de
                    p.v = p.v + h.dt * dv
        for p in self.populations:
            if p.clamped:
                p.v = p.clamp_target.copy()
        self.steps_taken += 1
        self._check_finite()

    def _check_finite(self):
        for p in self.populations:
            for arr in (p.v, p.eps):
                if not np.all(np.isfinite(arr)) or np.any(np.abs(arr) > DIVERGENCE_LIMIT):
                    raise IntegrationDivergenceError(self.steps_taken)

    def step_slow(self):
        """One Euler step of the weight equations from the current state.

        Local rule: every update uses only quantities available at the
        two ends of a connection (src activity, dst error).
        """
        if self.weights_frozen:
            raise ContractViolationError("weights are frozen")
        h = self.hyper
        for c in self.connections:
            sig = self.populations[c.src].activation.apply(self.populations[c.src].v)
            err = self.populations[c.dst].eps
            c.M = c.M + (h.dt / h.gamma_m) * np.outer(err, sig)
            if self.tied:
                c.W = c.M.T.copy()
            else:
                c.W = c.W + (h.dt / h.gamma_w) * np.outer(sig, err)
            c.b = c.b + (h.dt / h.gamma_b) * err
            if c.src == c.dst:
                np.fill_diagonal(c.M, 0.0)
                np.fill_diagonal(c.W, 0.0)

    def energy(self, errors=None) -> float:
        """Total error energy sum_i (zeta/2) * ||eps_i||^2."""
        if errors is None:
            errors = [p.eps for p in self.populations]
        z = self.hyper.zeta
        return float(sum(0.5 * z * float(np.dot(e, e)) for e in errors))

    def residual(self) -> float:
        """Sup-norm of the fast-state time derivative, skipping the value
        equations of clamped populations."""
        V = [p.v for p in self.populations]
        E = [p.eps for p in self.populations]
        dV, dE = self.fast_derivatives(V, E)
        worst = 0.0
        for i, p in enumerate(self.populations):
            worst = max(worst, float(np.max(np.abs(dE[i]))))
            if not p.clamped:
                worst = max(worst, float(np.max(np.abs(dV[i]))))
        return worst

    def run_fast_to_equilibrium(self, tol: float = 1e-6,
                                max_steps: int = 100000) -> EquilibriumResult:
        """Step the fast equations until the derivative sup-norm drops
        under tol or the step budget runs out."""
        if max_steps == 0:
            return EquilibriumResult(0, False, self.residual())
        r = np.inf
        for k in range(1, max_steps + 1):
            self.step_fast()
            r = self.residual()
            if r < tol:
                return EquilibriumResult(k, True, r)
        return EquilibriumResult(max_steps, False, r)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def _init_connection(src, dst, n_src, n_dst, rng, init_scale, tied):
    std = init_scale / np.sqrt(n_src)
    M = rng.normal(0.0, std, size=(n_dst, n_src))
    W = M.T.copy() if tied else rng.normal(0.0, std, size=(n_src, n_dst))
    if src == dst:
        np.fill_diagonal(M, 0.0)
        np.fill_diagonal(W, 0.0)
    return Connection(src, dst, M, W, np.zeros(n_dst))


def build_single_population(n: int, activation: Activation, hyper: Hyperparams,
                            *, tie_weights: bool = False,
                            init_scale: float = 0.01, seed=0) -> Network:
    """Single population predicting itself through a self connection
    (diagonal held at zero so no unit predicts itself)."""
    rng = _as_rng(seed)
    pop = Population(n, activation)
    conn = _init_connection(0, 0, n, n, rng, init_scale, tie_weights)
    return Network([pop], [conn], hyper, tied=tie_weights)


def build_loop(sizes, activation: Activation, hyper: Hyperparams,
               *, tie_weights: bool = False,
               init_scale: float = 0.01, seed=0) -> Network:
    """Ring of populations where population i+1 predicts population i
    (cyclically), so predictions flow one way and errors the other."""
    if len(sizes) < 2:
        raise ConstructionError("a loop needs at least two populations")
    rng = _as_rng(seed)
    pops = [Population(int(n), activation) for n in sizes]
    conns = []
    L = len(pops)
    for i in range(L):
        src = (i + 1) % L
        conns.append(_init_connection(src, i, pops[src].size, pops[i].size,
                                      rng, init_scale, tie_weights))
    return Network(pops, conns, hyper, tied=tie_weights)
