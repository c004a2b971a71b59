"""
Gradient analysis of traditional MIL vs Sharp MIL

All gradients are dL/dp^j of the positive-bag loss L = -log(bag probability),
so y is fixed to 1 throughout this module.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from config import GradMethod
from src.diffcore import Graph, GraphBuilder
from src.mil.aggregate import clamp_probs, noisy_or, smil_logit
from src.utils.rng import derive_rng

logger = logging.getLogger(__name__)

# Monte-Carlo samples are drawn uniformly from (SAMPLE_LO, SAMPLE_HI)^M
SAMPLE_LO = 1e-6
SAMPLE_HI = 1.0 - 1e-6

# Samples per counter block of the "vanish" stream
SAMPLE_BLOCK = 65536

# Pass thresholds of the gradient-contrast construction
LEMMA_TRADITIONAL_MAX = 1e-3
LEMMA_SHARP_MIN = 0.5


@dataclass(frozen=True)
class GradPoint:
    """Instance probabilities of a positive bag and the instance to differentiate"""

    p: np.ndarray
    j: int
    y: int = 1

    def __post_init__(self):
        p = clamp_probs(self.p)
        if p.ndim != 1:
            raise ValueError(f"GradPoint holds one bag, got shape {p.shape}")
        if not 0 <= self.j < p.shape[0]:
            raise ValueError(f"Instance index {self.j} out of range for M={p.shape[0]}")
        if self.y != 1:
            raise ValueError("Gradient analysis covers positive bags only (y=1)")
        object.__setattr__(self, "p", p)

    @property
    def m(self) -> int:
        return int(self.p.shape[0])


def smil_instance_grads(P) -> np.ndarray:
    """
    dL/dp^j = (p - 1) / (p^j (1 - p^j)) for every instance, S-MIL with unit exponents

    Args:
        P: (..., M) instance probabilities

    Returns:
        (..., M) gradients, all <= 0
    """
    P = clamp_probs(P)
    # 1 - p, accurate near p = 1
    one_minus_p = expit(-smil_logit(P))
    return -one_minus_p[..., None] / (P * (1.0 - P))


def traditional_instance_grads(P) -> np.ndarray:
    """
    dL/dp^j = (p_hat - 1) / (p_hat (1 - p^j)) for every instance, noisy-OR

    Args:
        P: (..., M) instance probabilities

    Returns:
        (..., M) gradients, all <= 0
    """
    P = clamp_probs(P)
    p_hat = noisy_or(P)
    q = np.exp(np.sort(np.log1p(-P), axis=-1).sum(axis=-1))
    return -(q / p_hat)[..., None] / (1.0 - P)


def grad_smil_closed(pt: GradPoint) -> float:
    return float(smil_instance_grads(pt.p)[pt.j])


def grad_traditional_closed(pt: GradPoint) -> float:
    return float(traditional_instance_grads(pt.p)[pt.j])


def instance_grads(method: str, P) -> np.ndarray:
    """Closed-form gradient vectors for a method tag"""
    if method == GradMethod.SHARP:
        return smil_instance_grads(P)
    if method == GradMethod.TRADITIONAL:
        return traditional_instance_grads(P)
    raise ValueError(f"Unknown gradient method '{method}', expected one of {GradMethod.ALL}")


def containment_ratio(P) -> np.ndarray:
    """
    Per-point max_j |traditional_j| / |sharp_j|

    Never exceeds 1, so wherever every S-MIL gradient is below a threshold the
    noisy-OR gradients are too.
    """
    ratio = np.abs(traditional_instance_grads(P)) / np.abs(smil_instance_grads(P))
    return ratio.max(axis=-1)


def bag_loss_graph(method: str, m: int) -> Graph:
    """
    Positive-bag loss over instance probabilities "p" (shape (m,))

    sharp:       -log_sigmoid(sum_j log p^j - log(1 - p^j))
    traditional: -log(1 - exp(sum_j log(1 - p^j)))
    """
    if m < 1:
        raise ValueError(f"M must be >= 1, got {m}")
    g = GraphBuilder()
    p = g.input("p")
    log_one_minus = g.log(g.one_minus(p))
    if method == GradMethod.SHARP:
        ell = g.sum(g.sub(g.log(p), log_one_minus))
        loss = g.scale(g.log_sigmoid(ell), -1.0)
    elif method == GradMethod.TRADITIONAL:
        loss = g.scale(g.log1mexp(g.sum(log_one_minus)), -1.0)
    else:
        raise ValueError(f"Unknown gradient method '{method}', expected one of {GradMethod.ALL}")
    return g.build(loss)


@dataclass(frozen=True)
class VanishReport:
    """Share of the sampled cube where every instance gradient is below tau"""

    method: str
    m: int
    tau: float
    samples: int
    seed: int
    fraction: float

    def to_dict(self) -> dict:
        return asdict(self)


def _count_block(method: str, m: int, tau: float, samples: int, seed: int, block: int) -> int:
    size = min(SAMPLE_BLOCK, samples - block * SAMPLE_BLOCK)
    rng = derive_rng(seed, "vanish", block)
    P = rng.uniform(SAMPLE_LO, SAMPLE_HI, size=(size, m))
    grads = instance_grads(method, P)
    return int(np.count_nonzero(np.abs(grads).max(axis=-1) < tau))


def vanish_fraction(
    method: str,
    m: int,
    tau: float,
    samples: int,
    seed: int,
    workers: int = 1,
) -> VanishReport:
    """
    Monte-Carlo estimate of the gradient-vanishing region

    Sample i is the same point for every method and every worker count, so
    fractions are comparable across methods and monotone in tau.

    Args:
        method: "traditional" or "sharp"
        m: Instances per bag, >= 2
        tau: Threshold on max_j |dL/dp^j|, >= 0
        samples: Number of uniform points, >= 1
        seed: Run seed
        workers: Threads evaluating blocks

    Returns:
        VanishReport
    """
    if method not in GradMethod.ALL:
        raise ValueError(f"Unknown gradient method '{method}', expected one of {GradMethod.ALL}")
    if m < 2:
        raise ValueError(f"M must be >= 2, got {m}")
    if not (tau >= 0 and math.isfinite(tau)):
        raise ValueError(f"tau must be a finite number >= 0, got {tau}")
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")

    blocks = range(math.ceil(samples / SAMPLE_BLOCK))

    def _count(block: int) -> int:
        return _count_block(method, m, tau, samples, seed, block)

    if workers == 1:
        total = sum(map(_count, blocks))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            total = sum(pool.map(_count, blocks))

    report = VanishReport(method=method, m=m, tau=float(tau), samples=samples, seed=seed, fraction=total / samples)
    logger.info(f"Vanish fraction {method} M={m} tau={tau:g}: {report.fraction:.6g} over {samples} samples")
    return report


@dataclass(frozen=True)
class Lemma2bRecord:
    """Gradients at p = (eps, 1 - eps, delta, ..., delta) w.r.t. the first delta instance"""

    m: int
    eps: float
    delta: float
    j: int
    p_hat: float
    p: float
    grad_traditional: float
    grad_sharp: float
    expected_traditional: float
    expected_sharp: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def lemma2b_point(m: int, eps: float, delta: float) -> np.ndarray:
    """The contrast construction (eps, 1 - eps, delta, ..., delta)"""
    if not (isinstance(m, (int, np.integer)) and m >= 3):
        raise ValueError(f"M must be an integer >= 3, got {m}")
    if not 0 < eps <= 1e-3:
        raise ValueError(f"eps must lie in (0, 1e-3], got {eps}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return np.array([eps, 1.0 - eps] + [delta] * (m - 2))


def lemma2b_case(m: int, eps: float, delta: float) -> Lemma2bRecord:
    """
    One instance near 0 and one near 1 saturate noisy-OR but cancel in S-MIL

    The noisy-OR gradient of every delta instance shrinks with eps while the
    S-MIL gradient stays at (1 - p) / (delta (1 - delta)) with
    p = 1 / (1 + (1/delta - 1)^(M-2)).

    Args:
        m: Instances, >= 3
        eps: Distance of the two extreme instances from {0, 1}, in (0, 1e-3]
        delta: Value of the remaining instances, in (0, 1)

    Returns:
        Lemma2bRecord with measured and expected gradients and the pass flag
    """
    point = lemma2b_point(m, eps, delta)
    j = 2
    pt = GradPoint(point, j)
    p_hat = float(noisy_or(point))
    p = float(expit(smil_logit(point)))
    grad_traditional = grad_traditional_closed(pt)
    grad_sharp = grad_smil_closed(pt)

    expected_p = 1.0 / (1.0 + (1.0 / delta - 1.0) ** (m - 2))
    expected_traditional = -eps * (1.0 - eps) * (1.0 - delta) ** (m - 2) / (p_hat * (1.0 - delta))
    expected_sharp = -(1.0 - expected_p) / (delta * (1.0 - delta))

    passed = abs(grad_traditional) < LEMMA_TRADITIONAL_MAX and abs(grad_sharp) > LEMMA_SHARP_MIN
    return Lemma2bRecord(
        m=int(m),
        eps=float(eps),
        delta=float(delta),
        j=j,
        p_hat=p_hat,
        p=p,
        grad_traditional=grad_traditional,
        grad_sharp=grad_sharp,
        expected_traditional=expected_traditional,
        expected_sharp=expected_sharp,
        passed=passed,
    )
