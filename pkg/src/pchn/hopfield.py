"""Classical binary Hopfield network, used as the recall oracle.

Outer-product (Hebbian) storage, asynchronous sign updates, and the two
textbook energy forms.  Kept deliberately simple and integer-exact on
+-1 states so energy monotonicity can be asserted without tolerances.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConstructionError


@dataclass
class HopfieldNet:
    W: np.ndarray
    b: np.ndarray

    @property
    def d(self) -> int:
        return self.W.shape[0]


@dataclass
class RecallResult:
    v: np.ndarray
    sweeps: int
    converged: bool


def _check_pm1(x, what):
    x = np.asarray(x, dtype=float)
    if not np.all(np.abs(x) == 1.0):
        raise ConstructionError(f"{what} must have entries +-1 exactly")
    return x


def hebbian_store(patterns) -> HopfieldNet:
    """Sum of outer products with the diagonal zeroed; zero bias."""
    X = _check_pm1(patterns, "patterns")
    if X.ndim != 2:
        raise ConstructionError("patterns must be a (N, d) array")
    W = X.T @ X
    np.fill_diagonal(W, 0.0)
    return HopfieldNet(W, np.zeros(X.shape[1]))


def async_sweep(net: HopfieldNet, v, order):
    """Update the listed neurons one at a time, in order, each seeing the
    latest state.  A zero local field keeps the previous value."""
    v = _check_pm1(v, "state").copy()
    for i in order:
        h = float(net.W[i] @ v + net.b[i])
        if h > 0.0:
            v[i] = 1.0
        elif h < 0.0:
            v[i] = -1.0
    return v


def hn_energy(net: HopfieldNet, v) -> float:
    v = np.asarray(v, dtype=float)
    return float(-0.5 * v @ net.W @ v - net.b @ v)


def interaction_energy(patterns, v) -> float:
    """Pattern-overlap form: -(1/2) sum_n (x_n . v)^2.  On +-1 states it
    matches hn_energy of the stored net up to the constant N*d/2."""
    X = np.asarray(patterns, dtype=float)
    v = np.asarray(v, dtype=float)
    overlaps = X @ v
    return float(-0.5 * np.dot(overlaps, overlaps))


def recall(net: HopfieldNet, v0, max_sweeps: int = 50, seed=0) -> RecallResult:
    """Sweep all neurons in a fresh random order until a full sweep
    changes nothing or the sweep budget runs out."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    v = _check_pm1(v0, "state").copy()
    for k in range(1, max_sweeps + 1):
        nxt = async_sweep(net, v, rng.permutation(net.d))
        if np.array_equal(nxt, v):
            return RecallResult(nxt, k, True)
        v = nxt
    return RecallResult(v, max_sweeps, False)
