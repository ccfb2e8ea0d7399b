"""Command-line interface.

Commands: ``gen``, ``conv``, ``convpool``, ``sweep``, ``analyze`` and
``forward``; run ``ecrconv COMMAND --help`` for their options.

Exit status is 0 on success, 2 for usage and configuration errors (bad
arguments, dimensions, files) and 1 for anything else.

"""

import os
import sys
import logging
import argparse

from . import engine
from .engine import conf
from .engine.tensor import (Filter, ConvConfig, PoolConfig, Dims, dense_conv,
                            im2col_conv, im2col_csr_conv, sparsity)
from .engine.metrics import (OpCount, theta, traffic_conv, traffic_separate,
                             traffic_fused, traffic_resident,
                             traffic_im2col_csr)
from .engine.execmodel import ExecConfig, plan
from .engine.ecr import ecr_conv
from .engine.pipeline import (NetworkSpec, forward, toy_network,
                              multichannel_conv_pool, METHODS)
from .engine import dataset
from .engine.util import ConfigError, pair
from .report import RunReport, Timer, write_csv
from . import sweep

log = logging.getLogger(__name__)

ANALYZE_COLUMNS = ('name', 'channels', 'height', 'width', 'raw_sparsity',
                   'im2col_sparsity', 'theta', 'error')


# inputs and outputs


def read_map (path):
    """Load a feature map by extension (``.fmap``, ``.csv`` or ``.npy``)."""
    return dataset.load_any(path)


def write_map (fmap, path):
    """Write a feature map as CSV if ``path`` ends in ``.csv``, else FMAP."""
    if path.lower().endswith('.csv'):
        dataset.save_csv(fmap, path)
    else:
        dataset.save(fmap, path)


def read_kernel (spec, channels):
    """Build a filter from a kernel argument.

read_kernel(spec, channels) -> Filter

:arg spec: a map file (whose ``(channels, height, width)`` become the
           filter's shape), ``k3`` (the 3x3 fixture kernel), ``ones:K`` or
           ``ones:KHxKW``, or ``random:K[:SEED]``.
:arg channels: channel count for the generated kernels.

"""
    if spec == 'k3':
        return dataset.fixture_k3()
    kind, sep, rest = spec.partition(':')
    if sep and kind in ('ones', 'random'):
        size, _, seed = rest.partition(':')
        try:
            if 'x' in size:
                k_h, k_w = (int(v) for v in size.split('x'))
            else:
                k_h, k_w = pair(int(size))
            seed = int(seed) if seed else 0
        except ValueError:
            raise ConfigError('bad kernel: \'{0}\''.format(spec))
        if kind == 'ones':
            return Filter.from_values([1] * (channels * k_h * k_w), channels,
                                      k_h, k_w)
        return dataset.random_filter(k_h, k_w, channels, seed)
    return Filter(read_map(spec).data)


def _emit (report, path):
    if path is None:
        print(report.dumps())
    else:
        report.write(path)


# commands


def cmd_gen (args, exec_cfg):
    fmap = dataset.generate(args.height, args.width, args.channels,
                            args.sparsity, args.seed)
    write_map(fmap, args.out)
    n = fmap.values.size
    zeros = n - int((fmap.values != 0).sum())
    print('wrote {0}: {1}x{2}x{3}, sparsity {4}/{5} ({6:.6f})'.format(
        args.out, fmap.channels, fmap.height, fmap.width, zeros, n,
        float(zeros) / n))
    return 0


def cmd_conv (args, exec_cfg):
    fmap = read_map(args.input)
    filt = read_kernel(args.kernel, fmap.channels)
    cfg = ConvConfig(args.stride)
    dims = Dims.of(fmap, filt, cfg)
    counters = OpCount()
    with Timer() as t:
        if args.method == 'dense':
            out = dense_conv(fmap, filt, cfg, counters)
        elif args.method == 'im2col':
            out = im2col_conv(fmap, filt, cfg, counters)
        elif args.method == 'im2col-csr':
            out = im2col_csr_conv(fmap, filt, cfg, counters)
        else:
            out = ecr_conv(fmap, filt, cfg, counters, exec_cfg)
    if args.out:
        write_map(out, args.out)
    grid = plan(dims, 'ECR')
    if args.method == 'im2col-csr':
        report = traffic_im2col_csr(dims, counters.multiplications)
    else:
        report = traffic_conv(dims)
    _emit(RunReport(args.method, dims, exec_cfg.workers, t.ns, counters,
                    report, grid.shape, out,
                    input_sparsity=sparsity(fmap)),
          args.report)
    return 0


_CONV_POOL_TRAFFIC = {
    'dense-separate': traffic_separate,
    'ecr': traffic_resident,
    'pecr': traffic_fused
}


def cmd_convpool (args, exec_cfg):
    fmap = read_map(args.input)
    filt = read_kernel(args.kernel, fmap.channels)
    conv = ConvConfig(args.stride)
    pool_cfg = PoolConfig(args.pool_w, args.pool_h, args.pool_stride,
                          args.pool_mode)
    dims = Dims.of(fmap, filt, conv, pool_cfg)
    # fail before computing: pecr tiling (naming the axis) and window fit
    grid = plan(dims, 'PECR' if args.method == 'pecr' else 'ECR')
    dims.pool_out()
    counters = OpCount()
    with Timer() as t:
        out = multichannel_conv_pool(fmap, [filt], conv, pool_cfg,
                                     args.method, counters, exec_cfg)
    if args.out:
        write_map(out, args.out)
    separate = traffic_separate(dims)
    traffic = _CONV_POOL_TRAFFIC[args.method](dims)
    _emit(RunReport(args.method, dims, exec_cfg.workers, t.ns, counters,
                    traffic, grid.shape, out,
                    input_sparsity=sparsity(fmap),
                    separate_transfer_floats=separate.transfer_floats),
          args.report)
    return 0


def cmd_sweep (args, exec_cfg):
    if (args.config is None) == (args.preset is None):
        raise ConfigError('give exactly one of --config and --preset')
    if args.config is not None:
        points, methods = sweep.load_config(args.config)
    else:
        points, methods = sweep.preset(args.preset)
    if args.methods:
        methods = sweep.check_methods(args.methods.split(','))
    rows = sweep.run_sweep(points, methods, exec_cfg)
    cols = sweep.columns(methods)
    if args.out is None:
        write_csv(sys.stdout, cols, rows)
    else:
        with open(args.out, 'w', newline='') as f:
            write_csv(f, cols, rows)
    log.info('%d sweep points', len(rows))
    return 0


def cmd_analyze (args, exec_cfg):
    if not os.path.isdir(args.inputs):
        raise ConfigError('not a directory: \'{0}\''.format(args.inputs))
    k_h, k_w = pair(args.kernel_size)
    rows = []
    failed = 0
    for name, result in dataset.load_dir(args.inputs):
        row = {'name': name}
        if isinstance(result, Exception):
            log.warning('%s: %s', name, result)
            row['error'] = str(result)
            failed += 1
        else:
            try:
                (raw, im2col), = dataset.sparsity_profile([result], k_w, k_h,
                                                          args.stride)
            except ValueError as e:
                log.warning('%s: %s', name, e)
                row['error'] = str(e)
                failed += 1
            else:
                row.update(channels=result.channels, height=result.height,
                           width=result.width, raw_sparsity=raw,
                           im2col_sparsity=im2col,
                           theta=theta(raw, result.width))
        rows.append(row)
    if args.out is None:
        write_csv(sys.stdout, ANALYZE_COLUMNS, rows)
    else:
        with open(args.out, 'w', newline='') as f:
            write_csv(f, ANALYZE_COLUMNS, rows)
    if rows and failed == len(rows):
        log.error('no map could be analysed')
        return 1
    return 0


def cmd_forward (args, exec_cfg):
    if (args.network is None) == (args.toy is None):
        raise ConfigError('give exactly one of --network and --toy')
    if args.network is not None:
        net = NetworkSpec.load(args.network)
    else:
        net = toy_network(args.toy)
    if args.input is not None:
        fmap = read_map(args.input)
    else:
        c, h, w = net.input_shape
        fmap = dataset.generate(h, w, c, args.sparsity, args.seed)
    with Timer() as t:
        result = forward(net, fmap, args.method, exec_cfg)
    if args.out:
        write_map(result.output, args.out)
    o_c, o_h, o_w = result.output.shape
    _emit(RunReport(args.method, {'input': list(net.input_shape),
                                  'layers': len(net.layers)},
                    exec_cfg.workers, t.ns, result.counts, result.traffic,
                    (o_h, o_w), result.output, fallbacks=result.fallbacks,
                    layers=[l.to_dict() for l in result.layers]),
          args.report)
    return 0


# parser


def _add_conv_args (p):
    p.add_argument('--input', required=True,
                   help='feature map (.fmap, .csv or .npy)')
    p.add_argument('--kernel', required=True,
                   help='kernel file, k3, ones:K[xK] or random:K[:SEED]')
    p.add_argument('--stride', type=int, default=1)
    p.add_argument('--out', help='write the output map here')
    p.add_argument('--report', help='write the JSON report here instead of '
                   'to standard output')


def build_parser ():
    """The :mod:`argparse` parser of :func:`main`."""
    parser = argparse.ArgumentParser(
        prog='ecrconv', description='Sparse convolution with the ECR and '
        'PECR formats.')
    parser.add_argument('-w', '--workers', type=int, default=None,
                        help='host threads running blocks; defaults to '
                        'ECRCONV_WORKERS or 1')
    parser.add_argument('-b', '--debug', action='store_true')
    parser.add_argument('-p', '--profile', action='store_true',
                        help='run under cProfile and print statistics')
    parser.add_argument('-n', '--num-stats', type=int, default=30,
                        help='number of functions to show when profiling')
    parser.add_argument('-s', '--sort-stats', default='cumulative',
                        help='profile stats sort mode (see '
                        'pstats.Stats.sort_stats)')
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    p = sub.add_parser('gen', help='generate a sparse feature map')
    p.add_argument('--height', type=int, required=True)
    p.add_argument('--width', type=int, required=True)
    p.add_argument('--channels', type=int, default=1)
    p.add_argument('--sparsity', type=float, default=0.7)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True,
                   help='output file; CSV if it ends in .csv, else FMAP')
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser('conv', help='one convolution layer')
    _add_conv_args(p)
    p.add_argument('--method',
                   choices=('dense', 'ecr', 'im2col', 'im2col-csr'),
                   default='ecr')
    p.set_defaults(func=cmd_conv)

    p = sub.add_parser('convpool', help='convolution, ReLU and pooling')
    _add_conv_args(p)
    p.add_argument('--pool-h', type=int, default=2)
    p.add_argument('--pool-w', type=int, default=2)
    p.add_argument('--pool-stride', type=int, default=1,
                   help='stride of the pooling window (default 1)')
    p.add_argument('--pool-mode', choices=PoolConfig.modes, default='max')
    p.add_argument('--method', choices=('dense-separate', 'ecr', 'pecr'),
                   default='pecr')
    p.set_defaults(func=cmd_convpool)

    p = sub.add_parser('sweep', help='run methods over many problems')
    p.add_argument('--config', help='JSON sweep config')
    p.add_argument('--preset', help='named preset: {0}'.format(
        ', '.join(sorted(conf.SWEEP_PRESETS))))
    p.add_argument('--methods', help='comma-separated methods to run '
                   '(overrides the config)')
    p.add_argument('--out', help='CSV output; defaults to standard output')
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('analyze', help='sparsity profile of saved maps')
    p.add_argument('--inputs', required=True, help='directory of maps')
    p.add_argument('--kernel-size', type=int, default=3)
    p.add_argument('--stride', type=int, default=1)
    p.add_argument('--out', help='CSV output; defaults to standard output')
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser('forward', help='run a network')
    p.add_argument('--network', help='JSON network document')
    p.add_argument('--toy', type=int, metavar='SEED',
                   help='use the built-in toy network with this seed')
    p.add_argument('--input', help='input map; generated if not given')
    p.add_argument('--sparsity', type=float, default=0.5,
                   help='sparsity of a generated input')
    p.add_argument('--seed', type=int, default=0,
                   help='seed of a generated input')
    p.add_argument('--method', choices=METHODS, default='pecr')
    p.add_argument('--out', help='write the output map here')
    p.add_argument('--report', help='write the JSON report here instead of '
                   'to standard output')
    p.set_defaults(func=cmd_forward)
    return parser


def _profile (args, exec_cfg):
    from cProfile import Profile
    from pstats import Stats
    profiler = Profile()
    try:
        return profiler.runcall(args.func, args, exec_cfg)
    finally:
        Stats(profiler, stream=sys.stderr).strip_dirs() \
            .sort_stats(args.sort_stats).print_stats(args.num_stats)


def main (argv=None):
    """Run the command line.

main(argv=sys.argv[1:]) -> exit status

"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code
    engine.init('debug' if args.debug else None)
    try:
        exec_cfg = ExecConfig(workers=args.workers)
        if args.profile:
            return _profile(args, exec_cfg)
        else:
            return args.func(args, exec_cfg)
    except (ValueError, OSError) as e:
        log.error('%s', e)
        return 2
    except Exception as e:
        log.error('%s', e)
        log.debug('traceback:', exc_info=True)
        return 1
    finally:
        engine.quit()


if __name__ == '__main__':
    sys.exit(main())
