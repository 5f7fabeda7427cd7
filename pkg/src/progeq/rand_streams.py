"""Lazy uniform random streams with random access.

Every stream element is a pure function of ``(seed, index)`` so that suffix
views, substream partitions and memo keys never need a sequential generator
state. Private streams report reads to a callback, which the VM uses for
screening.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

_INV53 = 2.0 ** -53


def derive_seed(base: int, *labels: object) -> int:
    """Deterministic 64-bit child seed from a base seed and labels."""
    text = repr((int(base),) + tuple(labels)).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _raw_uniform(key: int, index: int) -> float:
    """SplitMix64 output at Weyl position ``index``; indices beyond 64 bits are
    folded limb by limb."""
    if index <= _MASK:
        return (_mix64((key + index * _GOLDEN) & _MASK) >> 11) * _INV53
    z = key ^ 0xD1B54A32D192ED03
    limbs = 0
    while index:
        z = _mix64((z + (index & _MASK) * _GOLDEN) & _MASK)
        index >>= 64
        limbs += 1
    return (_mix64((z + limbs) & _MASK) >> 11) * _INV53


class SharedStream:
    """Counter-based stream of doubles in [0, 1)."""

    __slots__ = ("seed", "label", "_key", "_cache", "_below", "__weakref__")

    def __init__(self, seed: int, label: str = "shared"):
        if seed < 0 or seed >= 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        self.seed = int(seed)
        self.label = label
        digest = hashlib.blake2b(self.seed.to_bytes(8, "little") + label.encode(), digest_size=8).digest()
        self._key = int.from_bytes(digest, "little")
        self._cache: dict[int, float] = {}
        self._below: dict[tuple, int] = {}

    def element(self, m: int) -> float:
        try:
            return self._cache[m]
        except KeyError:
            if m < 0:
                raise IndexError("stream index must be non-negative") from None
            value = self._cache[m] = _raw_uniform(self._key, m)
            return value

    def next_below(self, threshold: float, start: int, step: int) -> int:
        """Smallest raw index ``start + k*step`` whose element is below threshold."""
        below = self._below
        key = (threshold, step, start)
        hit = below.get(key)
        if hit is not None:
            return hit
        visited = []
        m = start
        element = self.element
        while True:
            cached = below.get((threshold, step, m))
            if cached is not None:
                found = cached
                break
            visited.append(m)
            if element(m) < threshold:
                found = m
                break
            m += step
        for v in visited:
            below[(threshold, step, v)] = found
        return found

    def view(self) -> "StreamView":
        return StreamView(self)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(seed={self.seed}, label={self.label!r})"


class PrivateStream(SharedStream):
    """A stream whose every read calls ``on_read`` (the screening hook)."""

    __slots__ = ("player", "on_read")

    def __init__(self, seed: int, player: int, on_read: Callable[[], None] | None = None):
        super().__init__(seed, label=f"private-{player}")
        self.player = player
        self.on_read = on_read

    def element(self, m: int) -> float:
        hook = self.on_read
        if hook is not None:
            hook()
        return SharedStream.element(self, m)


def _just_below(x: float) -> float:
    return math.nextafter(x, -math.inf)


class StreamView:
    """Affine index view ``element(m) = base.element(scale*m + shift)``.

    ``first`` optionally remaps element 0 into the interval ``[lo, hi)``
    as ``lo + r*width``; it is dropped by any view that excludes index 0.
    """

    __slots__ = ("base", "scale", "shift", "first", "key")

    def __init__(self, base: SharedStream, scale: int = 1, shift: int = 0,
                 first: tuple[float, float, float] | None = None):
        self.base = base
        self.scale = scale
        self.shift = shift
        self.first = first
        self.key = (base, scale, shift, first)

    def element(self, m: int) -> float:
        if m == 0 and self.first is not None:
            lo, width, hi = self.first
            value = lo + self.base.element(self.shift) * width
            if value >= hi:
                value = _just_below(hi)
            return value if value >= lo else lo
        return self.base.element(self.scale * m + self.shift)

    def raw_index(self, m: int) -> int:
        return self.scale * m + self.shift

    def suffix(self, k: int) -> "StreamView":
        if k < 0:
            raise ValueError("suffix offset must be non-negative")
        if k == 0:
            return self
        return StreamView(self.base, self.scale, self.shift + self.scale * k)

    def partition(self, i: int, k: int) -> "StreamView":
        """Substream ``element(l) = self.element(l*k + i + 1)``."""
        if k < 1 or not 1 <= i <= k:
            raise ValueError(f"partition index {i} out of range for k={k}")
        return StreamView(self.base, self.scale * k, self.shift + self.scale * (i + 1))

    def first_below(self, threshold: float) -> int:
        """min{t : element(t) < threshold}; the geometric time step."""
        if self.first is not None:
            if self.element(0) < threshold:
                return 0
            m = self.base.next_below(threshold, self.shift + self.scale, self.scale)
        else:
            m = self.base.next_below(threshold, self.shift, self.scale)
        return (m - self.shift) // self.scale

    def head(self, count: int) -> tuple[float, ...]:
        return tuple(self.element(m) for m in range(count))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, StreamView) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __repr__(self) -> str:
        extra = "" if self.first is None else f", first={self.first}"
        return f"StreamView({self.base!r}, scale={self.scale}, shift={self.shift}{extra})"


def suffix(view: StreamView, k: int) -> StreamView:
    return view.suffix(k)


def partition(view: StreamView, i: int, k: int) -> StreamView:
    return view.partition(i, k)


def element(view: StreamView, m: int) -> float:
    return view.element(m)


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True)
class DeltaSchedule:
    """Distribution over time steps t = 0, 1, 2, ...

    ``head`` lists δ^0..δ^{h-1} exactly; the remaining ``tail_mass`` is spread
    geometrically: δ^t = tail_mass·(1-ratio)·ratio^(t-h) for t ≥ h.
    """

    head: tuple[Fraction, ...] = ()
    tail_mass: Fraction = Fraction(0)
    tail_ratio: Fraction = Fraction(0)

    def __post_init__(self):
        head = tuple(as_fraction(p) for p in self.head)
        object.__setattr__(self, "head", head)
        object.__setattr__(self, "tail_mass", as_fraction(self.tail_mass))
        object.__setattr__(self, "tail_ratio", as_fraction(self.tail_ratio))
        if any(p < 0 for p in head) or self.tail_mass < 0:
            raise ValueError("schedule masses must be non-negative")
        if not 0 <= self.tail_ratio < 1:
            raise ValueError("tail ratio must lie in [0, 1)")
        if sum(head) + self.tail_mass != 1:
            raise ValueError(f"schedule mass is {sum(head) + self.tail_mass}, not 1")
        cum, acc = [], Fraction(0)
        for p in head:
            acc += p
            cum.append(acc)
        object.__setattr__(self, "_cum", tuple(cum))
        object.__setattr__(self, "_cum_float", tuple(float(c) for c in cum))

    @classmethod
    def geometric(cls, eps) -> "DeltaSchedule":
        eps = as_fraction(eps)
        if not 0 < eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        return cls((), Fraction(1), 1 - eps)

    @classmethod
    def point(cls, t: int) -> "DeltaSchedule":
        return cls(tuple([Fraction(0)] * t + [Fraction(1)]))

    @classmethod
    def finite(cls, probs: Sequence) -> "DeltaSchedule":
        return cls(tuple(probs))

    @property
    def head_len(self) -> int:
        return len(self.head)

    def prob(self, t: int) -> Fraction:
        if t < 0:
            return Fraction(0)
        h = len(self.head)
        if t < h:
            return self.head[t]
        return self.tail_mass * (1 - self.tail_ratio) * self.tail_ratio ** (t - h)

    def cdf(self, t: int) -> Fraction:
        """P(T ≤ t), exact."""
        if t < 0:
            return Fraction(0)
        h = len(self.head)
        if t < h:
            return self._cum[t]
        base = self._cum[-1] if h else Fraction(0)
        return base + self.tail_mass * (1 - self.tail_ratio ** (t - h + 1))

    def survival(self, t: int) -> Fraction:
        """P(T ≥ t), exact."""
        return 1 - self.cdf(t - 1)

    def cdf_float(self, t: int) -> float:
        if t < 0:
            return 0.0
        h = len(self.head)
        if t < h:
            return self._cum_float[t]
        base = self._cum_float[-1] if h else 0.0
        return base + float(self.tail_mass) * (1.0 - float(self.tail_ratio) ** (t - h + 1))

    def survival_float(self, t: int) -> float:
        return 1.0 - self.cdf_float(t - 1)

    def tail_horizon(self, tol: float = 1e-9) -> int:
        """Smallest t with P(T ≥ t) < tol."""
        h = len(self.head)
        for t in range(h + 1):
            if self.survival(t) < tol:
                return t
        if self.tail_mass == 0 or self.tail_ratio == 0:
            return h + 1
        # tail_mass * ratio^(t-h) < tol
        k = math.log(tol / float(self.tail_mass)) / math.log(float(self.tail_ratio))
        t = h + max(0, int(math.floor(k)) - 2)
        while self.survival_float(t) >= tol:
            t += 1
        return t

    def sample(self, r0: float) -> int:
        """Cumulative-bucket inverse: smallest t with P(T ≤ t) > r0."""
        for t, c in enumerate(self._cum_float):
            if c > r0:
                return t
        h = len(self.head)
        base = self._cum_float[-1] if h else 0.0
        mass = float(self.tail_mass)
        ratio = float(self.tail_ratio)
        if mass <= 0:
            return max(h - 1, 0)
        if ratio == 0.0:
            return h
        frac = 1.0 - (r0 - base) / mass
        if frac <= 0:
            k = 0
        else:
            k = max(0, int(math.log(frac) / math.log(ratio)) - 2)
        t = h + k
        while self.cdf_float(t) <= r0:
            t += 1
        while t > h and self.cdf_float(t - 1) > r0:
            t -= 1
        return t


def sample_time_step(view: StreamView, schedule: DeltaSchedule) -> int:
    return schedule.sample(view.element(0))


def reparameterize_first(view: StreamView, t: int, schedule: DeltaSchedule) -> StreamView:
    """Remap element 0 into the schedule's bucket for time step t."""
    if schedule.prob(t) <= 0:
        raise ValueError(f"time step {t} has zero mass under the schedule")
    lo = schedule.cdf_float(t - 1)
    hi = schedule.cdf_float(t)
    width = hi - lo
    if view.first is not None:
        lo0, w0, _ = view.first
        lo, width = lo + width * lo0, width * w0
    return StreamView(view.base, view.scale, view.shift, (lo, width, hi))


def combine_seeds(seeds: Iterable[bytes]) -> bytes:
    """Bitwise XOR of equal-length seeds."""
    seeds = [bytes(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    size = len(seeds[0])
    if any(len(s) != size for s in seeds):
        raise ValueError("seeds must have equal length")
    acc = 0
    for s in seeds:
        acc ^= int.from_bytes(s, "big")
    return acc.to_bytes(size, "big")
