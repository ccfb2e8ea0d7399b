"""Pinned pseudo-random number generation.

Everything random in the engine goes through :class:`Xorshift`, so generated
feature maps are identical on every platform for a given seed.  The algorithms
and test vectors are documented in ``doc/fmap.rst``.

"""

_MASK = (1 << 64) - 1


def splitmix64 (state):
    """One SplitMix64 step.

splitmix64(state) -> (new_state, output)

Both are unsigned 64-bit integers.

"""
    state = (state + 0x9e3779b97f4a7c15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xbf58476d1ce4e5b9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94d049bb133111eb) & _MASK
    return (state, z ^ (z >> 31))


class Xorshift (object):
    """xorshift64* generator.

Xorshift(seed, raw=False)

:arg seed: any integer.  It is passed through one :func:`splitmix64` step to
           get the initial state, so small and similar seeds still give
           unrelated streams.
:arg raw: use ``seed`` (modulo 2 ** 64) as the state directly; only useful for
          checking against published test vectors.

A zero state would make the generator emit zeros forever, so it is replaced by
the SplitMix64 increment constant.

"""

    def __init__ (self, seed, raw=False):
        seed &= _MASK
        if not raw:
            seed = splitmix64(seed)[1]
        #: Current 64-bit state.
        self.state = seed or 0x9e3779b97f4a7c15

    def next_u64 (self):
        """Advance and return the next unsigned 64-bit output."""
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        self.state = x
        return (x * 0x2545f4914f6cdd1d) & _MASK

    def next_u32 (self):
        """The high 32 bits of :meth:`next_u64`."""
        return self.next_u64() >> 32

    def below (self, n):
        """Integer in ``[0, n)``.

Uses the modulus of a 64-bit output; the bias is below ``n / 2 ** 64`` and is
part of the pinned behaviour.

"""
        return self.next_u64() % n

    def uniform_open0 (self):
        """Float in ``(0, 1]`` with 53 random bits."""
        return ((self.next_u64() >> 11) + 1) * (1. / (1 << 53))

    def shuffle (self, seq):
        """Fisher-Yates shuffle of a list in place, from the end backwards."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.below(i + 1)
            seq[i], seq[j] = seq[j], seq[i]
        return seq
