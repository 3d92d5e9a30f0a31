"""Smooth truncation functions used to clip the gradient estimators."""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import erf

from hjb_actor_critic.choices import TruncationModeChoices
from hjb_actor_critic.config import check_beta
from hjb_actor_critic.errors import ConfigurationError

HALF_SQRT_PI = 0.5 * np.sqrt(np.pi)


class Truncated(NamedTuple):
    """psi(x), psi'(x) and F(x) = psi(x) * psi'(x)."""

    psi: np.ndarray
    psi_prime: np.ndarray
    F: np.ndarray


@dataclass(frozen=True)
class TruncationFamily:
    """The width-dependent clipping function psi^N.

    In smooth mode psi is the identity on [-N^delta, N^delta] and its derivative decays
    like exp(-(|x| - N^delta)^2) outside, so psi saturates at N^delta + sqrt(pi)/2.
    Identity mode turns clipping off.
    """

    delta: float
    width: int
    mode: TruncationModeChoices = TruncationModeChoices.SMOOTH

    def __post_init__(self):
        """Validate delta and width."""
        object.__setattr__(self, "mode", TruncationModeChoices(self.mode))
        if self.width < 1:
            raise ConfigurationError(f"width must be positive, got {self.width}", field="width")
        if not self.delta > 0:
            raise ConfigurationError(f"truncation delta must be positive, got {self.delta}", field="truncation_delta")

    @classmethod
    def for_width(
        cls, width: int, beta: float, delta: Optional[float] = None, mode=TruncationModeChoices.SMOOTH
    ) -> "TruncationFamily":
        """Family for a network of the given width; delta defaults to (1 - beta) / 5."""
        check_beta(beta)
        if delta is None:
            delta = (1.0 - beta) / 5.0
        elif not 0 < delta < (1.0 - beta) / 4.0:
            raise ConfigurationError(
                f"truncation delta must lie in (0, {(1.0 - beta) / 4.0:g}) for beta={beta}", field="truncation_delta"
            )
        return cls(delta, width, mode)

    @property
    def threshold(self) -> float:
        """N^delta, the end of the identity region."""
        return float(self.width) ** self.delta

    def __call__(self, x) -> Truncated:
        """Evaluate psi, psi' and F elementwise."""
        return truncate(self, x)


def truncate(fam: TruncationFamily, x) -> Truncated:
    """Evaluate the truncation family elementwise."""
    x = np.asarray(x, dtype=float)
    if fam.mode == TruncationModeChoices.IDENTITY:
        return Truncated(x.copy(), np.ones_like(x), x.copy())
    level = fam.threshold
    excess = np.maximum(np.abs(x) - level, 0.0)
    inside = excess == 0.0
    psi = np.where(inside, x, np.sign(x) * (level + HALF_SQRT_PI * erf(excess)))
    psi_prime = np.where(inside, 1.0, np.exp(-(excess**2)))
    return Truncated(psi, psi_prime, psi * psi_prime)
