"""Counter-based random streams.

A :class:`SeededStream` is identified by ``(seed, namespace)`` and a draw
counter.  The ``j``-th raw 64-bit word of a stream is a pure function of
``(seed, namespace, j)``: the pair is hashed into a Philox key and ``j``
addresses the Philox counter.  Any draw can therefore be reproduced without
replaying the draws before it, and streams with different namespaces (for
example ``"train/17"`` and ``"test/17"``) are independent.
"""

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = ["SeededStream", "gaussian", "truncated_gaussian", "uniform"]

_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0


def _philox_key(seed, namespace):
    payload = f"{int(seed)}\x1f{namespace}".encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=16).digest(), "little")


def _raw_words(key, start, size):
    block, offset = divmod(start, 4)
    nblocks = (offset + size + 3) // 4
    words = np.random.Philox(key=key, counter=block).random_raw(4 * nblocks)
    return words[offset:offset + size]


@dataclass
class SeededStream:
    """A random stream addressed by ``(seed, namespace, counter)``.

    Every draw advances ``counter`` by the number of uniforms it consumed.
    A Gaussian consumes two uniforms; a truncated Gaussian consumes two per
    attempt.
    """

    seed: int
    namespace: str = ""
    counter: int = 0

    def __post_init__(self):
        self._key = _philox_key(self.seed, self.namespace)

    def child(self, name):
        """Fresh stream in the sub-namespace ``namespace/name``."""
        ns = f"{self.namespace}/{name}" if self.namespace else str(name)
        return SeededStream(self.seed, ns)

    def at(self, counter):
        """Copy of this stream positioned at ``counter``."""
        return SeededStream(self.seed, self.namespace, int(counter))

    # -- raw material --------------------------------------------------
    def unit_uniforms(self, size):
        """``size`` uniforms on [0, 1) with 53 random bits each."""
        size = int(size)
        if size < 0:
            raise DomainError("size must be non-negative")
        words = _raw_words(self._key, self.counter, size)
        self.counter += size
        return (words >> np.uint64(11)).astype(np.float64) * _INV_2_53

    # -- distributions -------------------------------------------------
    def uniforms(self, lo, hi, size):
        if not lo <= hi:
            raise DomainError(f"uniform needs lo <= hi, got [{lo}, {hi})")
        u = self.unit_uniforms(size)
        if lo == hi:
            return np.full(u.shape, float(lo))
        out = lo + (hi - lo) * u
        # rounding can land exactly on hi
        return np.minimum(out, np.nextafter(hi, lo))

    def gaussians(self, mu, sigma, size):
        """Box-Muller normals, one output per pair of uniforms."""
        if not sigma >= 0:
            raise DomainError(f"sigma must be non-negative, got {sigma}")
        u = self.unit_uniforms(2 * int(size)).reshape(-1, 2)
        z = np.sqrt(-2.0 * np.log1p(-u[:, 0])) * np.cos(_TWO_PI * u[:, 1])
        return mu + sigma * z

    def truncated_gaussians(self, mu, sigma, cut, size):
        """Normals conditioned on ``|value - mu| <= cut * sigma`` by rejection.

        ``cut = inf`` gives plain Gaussians.  The counter ends just past the
        last accepted attempt, so the result does not depend on how many
        candidates were generated speculatively.
        """
        if not cut > 0:
            raise DomainError(f"truncation must be positive, got {cut}")
        if not sigma >= 0:
            raise DomainError(f"sigma must be non-negative, got {sigma}")
        size = int(size)
        if math.isinf(cut) or sigma == 0.0:
            return self.gaussians(mu, sigma, size)
        accepted = []
        need = size
        while need > 0:
            start = self.counter
            batch = need + 8 + need // 16
            z = self.at(start).gaussians(0.0, 1.0, batch)
            ok = np.flatnonzero(np.abs(z) <= cut)
            if ok.size >= need:
                last = ok[need - 1]
                accepted.append(z[ok[:need]])
                self.counter = start + 2 * (int(last) + 1)
                need = 0
            else:
                accepted.append(z[ok])
                self.counter = start + 2 * batch
                need -= ok.size
        z = np.concatenate(accepted) if accepted else np.empty(0)
        return mu + sigma * z

    # scalar conveniences
    def uniform(self, lo, hi):
        return float(self.uniforms(lo, hi, 1)[0])

    def gaussian(self, mu, sigma):
        return float(self.gaussians(mu, sigma, 1)[0])

    def truncated_gaussian(self, mu, sigma, cut):
        return float(self.truncated_gaussians(mu, sigma, cut, 1)[0])


def uniform(stream, lo, hi):
    """One draw from U[lo, hi); advances ``stream``."""
    return stream.uniform(lo, hi)


def gaussian(stream, mu, sigma):
    return stream.gaussian(mu, sigma)


def truncated_gaussian(stream, mu, sigma, cut):
    return stream.truncated_gaussian(mu, sigma, cut)
