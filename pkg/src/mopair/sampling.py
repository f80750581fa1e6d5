"""Monte-Carlo emulation of the heterodyne measurement chain.

Ideal heterodyne detection of a mode samples its Husimi distribution; for
a phase-symmetric state that is a radial Gamma mixture over the photon
number with a uniform phase.  The amplifier adds a classical complex
Gaussian on top, and the sum reproduces the anti-normally-ordered moment
bookkeeping of the inversion relations exactly (verified in tests up to
fourth order).  Classical two-mode states for bound tests are sampled
directly from their positive Glauber-Sudarshan density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binom as _binom_dist

from .errors import InvalidDataError, InvalidDomainError
from .tomography import HeraldBudget, SampleSet

__all__ = [
    "NumberDistribution",
    "TwoModeClassicalGaussian",
    "sample_heterodyne",
    "classical_bound_check",
    "BoundCheckReport",
    "simulate_experiment",
    "ExperimentData",
    "binomial_dilute",
    "mixture_moments",
]


@dataclass
class NumberDistribution:
    """Phase-symmetric state given by its photon-number distribution."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise InvalidDataError("number distribution must be a 1-D array")
        if np.any(p < -1e-12):
            raise InvalidDataError("number distribution has negative entries")
        p = np.clip(p, 0.0, None)
        s = p.sum()
        if not 0.999999 < s < 1.000001:
            raise InvalidDataError(f"number distribution sums to {s}, expected 1")
        self.p = p / s

    @classmethod
    def thermal(cls, nbar: float, dim: int = 64) -> "NumberDistribution":
        if nbar < 0:
            raise InvalidDataError("thermal occupation must be >= 0")
        if nbar == 0:
            p = np.zeros(dim)
            p[0] = 1.0
            return cls(p)
        x = nbar / (nbar + 1.0)
        p = (1 - x) * x ** np.arange(dim)
        return cls(p / p.sum())

    @classmethod
    def fock(cls, n: int, dim: int | None = None) -> "NumberDistribution":
        dim = dim or n + 1
        p = np.zeros(dim)
        p[n] = 1.0
        return cls(p)

    @classmethod
    def poisson(cls, lam: float, dim: int = 64) -> "NumberDistribution":
        k = np.arange(dim)
        logp = k * math.log(lam) - lam - np.cumsum(np.log(np.maximum(k, 1)))
        p = np.exp(logp)
        return cls(p / p.sum())

    @property
    def mean(self) -> float:
        return float(self.p @ np.arange(self.p.size))

    @property
    def mean_nn1(self) -> float:
        n = np.arange(self.p.size)
        return float(self.p @ (n * (n - 1)))

    @property
    def g2(self) -> float:
        return self.mean_nn1 / self.mean**2


def binomial_dilute(dist: NumberDistribution, eta: float) -> NumberDistribution:
    """Number distribution after beam-splitter loss with transmissivity eta.

    Exact for linear loss; preserves the normalized factorial-moment ratios
    (g2 is invariant under dilution).
    """
    if not 0.0 <= eta <= 1.0:
        raise InvalidDataError("transmissivity must be in [0, 1]")
    n_max = dist.p.size - 1
    out = np.zeros(n_max + 1)
    for n, pn in enumerate(dist.p):
        if pn == 0.0:
            continue
        k = np.arange(n + 1)
        out[: n + 1] += pn * _binom_dist.pmf(k, n, eta)
    return NumberDistribution(out / out.sum())


def mixture_moments(dist_pair: NumberDistribution, dist_noise: NumberDistribution,
                    noise_weight: float) -> tuple[float, float, float]:
    """(C11, C22, g2) of a click mixture: pair clicks vs information-less
    noise clicks that leave the mode in its unconditional state."""
    w = noise_weight
    c11 = (1 - w) * dist_pair.mean + w * dist_noise.mean
    c22 = (1 - w) * dist_pair.mean_nn1 + w * dist_noise.mean_nn1
    return c11, c22, c22 / c11**2


@dataclass
class TwoModeClassicalGaussian:
    """Classical (positive Glauber-Sudarshan) two-mode Gaussian state.

    ``cov`` is the 4x4 real covariance of (Re a, Im a, Re c, Im c) under
    the P density, ``mean`` its displacement.  Positive semidefiniteness is
    exactly the classicality condition this family encodes.
    """

    cov: np.ndarray
    mean: np.ndarray | None = None

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (4, 4):
            raise InvalidDomainError("covariance must be 4x4")
        cov = 0.5 * (cov + cov.T)
        lo = float(np.linalg.eigvalsh(cov).min())
        if lo < -1e-10 * max(1.0, float(np.abs(cov).max())):
            raise InvalidDomainError(
                f"covariance has negative eigenvalue {lo:.3e}: not a classical state"
            )
        self.cov = cov
        self.mean = np.zeros(4) if self.mean is None else np.asarray(self.mean, dtype=float)

    @classmethod
    def thermal_pair(cls, n_a: float, n_c: float, intensity_corr: float = 0.0
                     ) -> "TwoModeClassicalGaussian":
        """Thermal modes with amplitude correlation; intensity_corr = 1 gives
        a perfectly intensity-correlated pair (bound saturation)."""
        if not 0.0 <= intensity_corr <= 1.0:
            raise InvalidDomainError("intensity correlation must be in [0, 1]")
        r = math.sqrt(intensity_corr) * math.sqrt(n_a * n_c)
        cov = np.zeros((4, 4))
        cov[0, 0] = cov[1, 1] = n_a / 2.0
        cov[2, 2] = cov[3, 3] = n_c / 2.0
        cov[0, 2] = cov[2, 0] = r / 2.0
        cov[1, 3] = cov[3, 1] = r / 2.0
        return cls(cov)

    @classmethod
    def random(cls, rng, scale: float = 1.0) -> "TwoModeClassicalGaussian":
        """Random proper P-function: a random PSD covariance plus optional
        displacement; every draw is classical by construction."""
        A = rng.normal(size=(4, 4)) * math.sqrt(scale / 4.0)
        cov = A @ A.T
        mean = rng.normal(size=4) * math.sqrt(scale / 4.0) * rng.integers(0, 2)
        return cls(cov, mean)

    def sample(self, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
        """Draw (alpha_a, alpha_c) coherent amplitudes from the P density."""
        x = rng.multivariate_normal(self.mean, self.cov, size=n, method="cholesky"
                                    if _is_pd(self.cov) else "eigh")
        return x[:, 0] + 1j * x[:, 1], x[:, 2] + 1j * x[:, 3]


def _is_pd(cov: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(cov + 1e-18 * np.eye(4))
        return True
    except np.linalg.LinAlgError:
        return False


def _husimi_samples(spec, n: int, rng) -> np.ndarray:
    """Ideal heterodyne samples of the mode in ``spec``.

    Number mixtures: radius^2 ~ Gamma(n+1) per drawn photon number with a
    uniform phase (the Husimi density of a Fock state); classical Gaussian
    specs: coherent amplitude plus one unit of vacuum.
    """
    if isinstance(spec, NumberDistribution):
        ns = rng.choice(spec.p.size, size=n, p=spec.p)
        r2 = rng.gamma(shape=ns + 1.0, scale=1.0)
        phi = rng.uniform(0.0, 2.0 * math.pi, size=n)
        return np.sqrt(r2) * np.exp(1j * phi)
    if isinstance(spec, TwoModeClassicalGaussian):
        _, alpha_c = spec.sample(n, rng)
        vac = rng.normal(scale=math.sqrt(0.5), size=(n, 2))
        return alpha_c + vac[:, 0] + 1j * vac[:, 1]
    raise InvalidDataError(f"unsupported state spec {type(spec).__name__}")


def sample_heterodyne(state_spec, n_add: float, gain: float, n: int, seed,
                      kind: str = "unconditional", chunk_id: str = "0") -> SampleSet:
    """Emulated heterodyne records s = sqrt(G) (beta + gamma).

    beta is a Husimi draw of the temporal-mode state and gamma the
    amplifier's added complex Gaussian noise with E|gamma|^2 = n_add, so
    second moments satisfy E|s|^2 = G (<C C^†> + n_add).
    """
    if n_add < 0:
        raise InvalidDataError("added noise must be >= 0")
    if n < 1:
        raise InvalidDataError("need at least one sample")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    beta = _husimi_samples(state_spec, int(n), rng)
    if n_add > 0:
        gamma = rng.normal(scale=math.sqrt(n_add / 2.0), size=(int(n), 2))
        beta = beta + gamma[:, 0] + 1j * gamma[:, 1]
    seed_val = seed if isinstance(seed, (int, np.integer)) else None
    return SampleSet(samples=math.sqrt(gain) * beta, kind=kind, gain=gain,
                     chunk_id=chunk_id, seed=seed_val)


@dataclass
class BoundCheckReport:
    """Empirical classical-bound evaluation for one joint state."""

    g2_aa: float
    g2_cc: float
    g2_ac: float
    g2_cc_click: float
    cauchy_schwarz_margin: float   # sqrt(g2_aa g2_cc) - g2_ac, in block SEs
    click_bound_margin: float      # g2_cc_click - 1, in block SEs
    ok: bool


def classical_bound_check(joint_spec: TwoModeClassicalGaussian, n: int, seed,
                          n_blocks: int = 20, n_sigma: float = 4.0) -> BoundCheckReport:
    """Check the two classicality inequalities on a proper-P Gaussian state.

    Normally-ordered moments are P-density averages, so the empirical
    estimates come straight from P samples:
    g2_ac <= sqrt(g2_aa g2_cc) (Cauchy-Schwarz) and the click-conditioned
    autocorrelation <x y^2><x> / <x y>^2 >= 1 with x, y the mode
    intensities.  Standard errors come from disjoint sample blocks; a
    violation beyond ``n_sigma`` fails the check.
    """
    if not isinstance(joint_spec, TwoModeClassicalGaussian):
        raise InvalidDomainError("classical bound check requires a positive-P spec")
    n = int(n)
    if n < n_blocks * 10:
        raise InvalidDataError("need at least 10 samples per block")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a, c = joint_spec.sample(n, rng)
    x = np.abs(a) ** 2
    y = np.abs(c) ** 2

    def stats(xb, yb):
        mx, my = xb.mean(), yb.mean()
        g2aa = (xb**2).mean() / mx**2
        g2cc = (yb**2).mean() / my**2
        g2ac = (xb * yb).mean() / (mx * my)
        click = (xb * yb**2).mean() * mx / (xb * yb).mean() ** 2
        return np.array([
            g2ac - math.sqrt(g2aa * g2cc),   # must be <= 0
            1.0 - click,                     # must be <= 0
            g2aa, g2cc, g2ac, click,
        ])

    full = stats(x, y)
    blocks = np.array([
        stats(x[i::n_blocks], y[i::n_blocks]) for i in range(n_blocks)
    ])
    se = blocks.std(axis=0, ddof=1) / math.sqrt(n_blocks)
    cs_margin = full[0] / max(se[0], 1e-300)
    click_margin = full[1] / max(se[1], 1e-300)
    ok = (cs_margin <= n_sigma) and (click_margin <= n_sigma)
    return BoundCheckReport(
        g2_aa=float(full[2]), g2_cc=float(full[3]), g2_ac=float(full[4]),
        g2_cc_click=float(full[5]),
        cauchy_schwarz_margin=float(cs_margin),
        click_bound_margin=float(click_margin),
        ok=bool(ok),
    )


@dataclass
class ExperimentData:
    """Synthesized acquisition: sample sets plus the per-click source log."""

    conditional: list
    unconditional: list
    noise_only: list
    click_sources: np.ndarray
    n_add: float
    gain: float

    def chunks(self):
        return list(zip(self.conditional, self.unconditional, self.noise_only))


def simulate_experiment(pair_dist: NumberDistribution, uncond_dist: NumberDistribution,
                        budget: HeraldBudget, n_add: float, gain: float,
                        n_conditional: int, n_unconditional: int, n_noise: int,
                        seed=0, n_chunks: int = 1) -> ExperimentData:
    """End-to-end Monte-Carlo acquisition at fixed readout delay.

    Each conditional trial draws a click source from the budget fractions:
    pair clicks (spontaneous + thermally stimulated scattering) sample the
    heralded temporal-mode distribution, noise clicks (dark counts, pump
    leakage) sample the unconditional one.  Unconditional and noise-only
    streams are produced alongside, split into chunks with independent
    derived seeds so concurrent generation is reproducible.
    """
    if min(n_conditional, n_unconditional, n_noise) < 1:
        raise InvalidDataError("trial counts must be >= 1")
    root = np.random.SeedSequence(seed if isinstance(seed, (int, np.integer)) else 0)
    streams = root.spawn(n_chunks)
    p_noise = budget.noise_fraction

    cond_sets, unc_sets, noise_sets = [], [], []
    click_log = []
    per = [n_conditional // n_chunks] * n_chunks
    per[-1] += n_conditional - sum(per)
    per_u = [n_unconditional // n_chunks] * n_chunks
    per_u[-1] += n_unconditional - sum(per_u)
    per_n = [n_noise // n_chunks] * n_chunks
    per_n[-1] += n_noise - sum(per_n)

    for k, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        is_noise = rng.uniform(size=per[k]) < p_noise
        click_log.append(is_noise)
        n_noise_clicks = int(is_noise.sum())
        n_pair_clicks = per[k] - n_noise_clicks
        vals = np.empty(per[k], dtype=np.complex128)
        if n_pair_clicks:
            vals[~is_noise] = sample_heterodyne(
                pair_dist, n_add, gain, n_pair_clicks, rng).samples
        if n_noise_clicks:
            vals[is_noise] = sample_heterodyne(
                uncond_dist, n_add, gain, n_noise_clicks, rng).samples
        cond_sets.append(SampleSet(vals, "conditional", gain, chunk_id=str(k)))
        unc_sets.append(sample_heterodyne(uncond_dist, n_add, gain, per_u[k], rng,
                                          kind="unconditional", chunk_id=str(k)))
        noise_sets.append(sample_heterodyne(NumberDistribution.fock(0), n_add, gain,
                                            per_n[k], rng, kind="noise_only",
                                            chunk_id=str(k)))
    return ExperimentData(
        conditional=cond_sets,
        unconditional=unc_sets,
        noise_only=noise_sets,
        click_sources=np.concatenate(click_log),
        n_add=n_add,
        gain=gain,
    )
