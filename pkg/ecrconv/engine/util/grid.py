"""Simulated execution grid representation."""


class Grid (object):
    """A 2D grid of work: blocks of threads, as a GPU kernel launch.

Grid(blocks, threads_per_block, shared_bytes_per_block=0)

:arg blocks: number of thread blocks (positive integer).
:arg threads_per_block: number of threads in every block (positive integer).
:arg shared_bytes_per_block: shared memory each block needs, in bytes.

"""

    def __init__ (self, blocks, threads_per_block, shared_bytes_per_block=0):
        for name, n in (('blocks', blocks),
                        ('threads_per_block', threads_per_block)):
            if int(n) != n or n < 1:
                raise ValueError('{0} must be a positive integer'.format(name))
        if shared_bytes_per_block < 0:
            raise ValueError('shared_bytes_per_block must be non-negative')
        #: Number of blocks.
        self.blocks = int(blocks)
        #: Number of threads in each block.
        self.threads_per_block = int(threads_per_block)
        #: Modeled shared memory per block, in bytes.
        self.shared_bytes_per_block = int(shared_bytes_per_block)

    def __repr__ (self):
        return 'Grid({0}, {1}, {2})'.format(self.blocks,
                                            self.threads_per_block,
                                            self.shared_bytes_per_block)

    def __eq__ (self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return self.as_tuple() == other.as_tuple()

    def __hash__ (self):
        return hash(self.as_tuple())

    def as_tuple (self):
        """``(blocks, threads_per_block, shared_bytes_per_block)``."""
        return (self.blocks, self.threads_per_block,
                self.shared_bytes_per_block)

    @property
    def shape (self):
        """``(blocks, threads_per_block)``."""
        return (self.blocks, self.threads_per_block)

    def cells (self):
        """Iterator over all ``(block, thread)`` pairs in launch order."""
        for b in range(self.blocks):
            for t in range(self.threads_per_block):
                yield (b, t)
