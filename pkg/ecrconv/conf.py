def _points (sizes, sparsities, **kw):
    return [dict(size=size, sparsity=s, **kw) for size in sizes
                                              for s in sparsities]


class Conf (object):
    # bump when RunReport or sweep CSV columns change
    REPORT_SCHEMA = 2

    # methods a sweep runs when its config names none
    SWEEP_METHODS = ['dense', 'im2col', 'im2col-csr', 'ecr', 'pecr']

    # named sweep point lists for 'sweep --preset'
    SWEEP_PRESETS = {
        'smoke': [{'size': 5, 'kernel': 3, 'stride': 1, 'sparsity': 0.68}],
        # single convolution layers at the sizes and sparsities of late
        # VGG-19 layers
        'layers': _points((5, 6, 7, 11, 14), (0.9, 0.95), kernel=3,
                          stride=1),
        # sizes that tile exactly under 3x3 convolution and 2x2/2 pooling
        'fusion': _points((6, 14, 28, 56), (0.5, 0.7, 0.9), kernel=3,
                          stride=1, pool={'w': 2, 'h': 2, 'stride': 2})
    }
