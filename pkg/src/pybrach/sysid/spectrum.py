"""
Spectrum - Single-sided amplitude spectra and harmonic peak picking.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import fft

from ..core.errors import ConfigError, NumericalFailure

MIN_SAMPLES = 64


@dataclass(frozen=True)
class Spectrum:
    """Amplitude spectrum: a sinusoid of amplitude A on a bin shows as A. ``mean`` is the removed offset."""

    freqs: np.ndarray
    amps: np.ndarray
    n_samples: int
    mean: float = 0.0

    def __post_init__(self):
        if len(self.freqs) != len(self.amps):
            raise ConfigError("spectrum frequencies and amplitudes differ in length")

    @property
    def resolution(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def power(self) -> float:
        """Mean-square value of the (mean-removed) signal implied by the spectrum."""
        weights = np.full(len(self.amps), 0.5)
        weights[0] = 1.0
        if self.n_samples % 2 == 0:
            weights[-1] = 1.0
        return float(weights @ self.amps ** 2)

    def to_text(self) -> str:
        lines = ["# freq_hz amplitude"]
        lines += [f"{f!r} {a!r}" for f, a in zip(self.freqs.tolist(), self.amps.tolist())]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class HarmonicFit:
    """Peak frequencies (Hz) and amplitudes, sorted by frequency, plus the signal offset if known."""

    f: tuple
    a: tuple
    offset: Optional[float] = None

    def __post_init__(self):
        if len(self.f) != len(self.a):
            raise ConfigError("harmonic frequencies and amplitudes differ in length")
        if any(later <= earlier for earlier, later in zip(self.f, self.f[1:])):
            raise ConfigError("harmonic frequencies must be strictly increasing")


def compute_spectrum(signal: Sequence[float], dt: float) -> Spectrum:
    """
    Single-sided magnitude spectrum of the mean-removed signal.

    Args:
        signal: Uniformly sampled values
        dt: Sampling interval, s

    Returns:
        Spectrum with resolution 1 / (N dt)

    Raises:
        ConfigError: For fewer than 64 samples or dt <= 0
    """
    x = np.asarray(signal, dtype=float)
    if x.size < MIN_SAMPLES:
        raise ConfigError(f"spectrum needs at least {MIN_SAMPLES} samples, got {x.size}")
    if dt <= 0:
        raise ConfigError("sampling interval must be positive")
    n = x.size
    coefficients = np.abs(fft.rfft(x - x.mean())) / n
    amps = 2.0 * coefficients
    amps[0] = coefficients[0]
    if n % 2 == 0:
        amps[-1] = coefficients[-1]
    return Spectrum(fft.rfftfreq(n, dt), amps, n, float(x.mean()))


def extract_harmonics(s: Spectrum, n: int = 3, floor: float = 1e-3) -> HarmonicFit:
    """
    The n strongest local maxima of a spectrum, refined by parabolic interpolation.

    A local maximum is a bin strictly greater than both neighbours and above
    ``floor`` times the largest amplitude.

    Raises:
        NumericalFailure: If fewer than n peaks exist
    """
    amps = s.amps
    interior = np.arange(1, len(amps) - 1)
    is_peak = (amps[interior] > amps[interior - 1]) & (amps[interior] > amps[interior + 1])
    peaks = interior[is_peak & (amps[interior] > floor * amps.max())]
    if len(peaks) < n:
        raise NumericalFailure(f"fewer than {n} peaks in spectrum (found {len(peaks)})")
    strongest = peaks[np.argsort(amps[peaks])[::-1][:n]]
    refined = []
    for k in sorted(strongest):
        alpha, beta, gamma = amps[k - 1], amps[k], amps[k + 1]
        curvature = alpha - 2.0 * beta + gamma
        delta = 0.5 * (alpha - gamma) / curvature if curvature != 0 else 0.0
        refined.append(((k + delta) * s.resolution, beta - 0.25 * (alpha - gamma) * delta))
    return HarmonicFit(tuple(float(f) for f, _ in refined), tuple(float(a) for _, a in refined), s.mean)
