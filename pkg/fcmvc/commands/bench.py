from loguru import logger

from fcmvc.commands import build, float_list, int_list, render, str_list
from fcmvc.models import ExperimentRow, SolverConfig, SyntheticSpec
from fcmvc.services.harness import (
    DEFAULT_RATIOS,
    format_order,
    generate_synthetic,
    order_sweep,
    ratio_sweep,
    sample_orders,
    scale_sweep,
    summarize,
)
from fcmvc.services.storage import Storage
from fcmvc.utils import plot


def register(subparsers) -> None:
    parser = subparsers.add_parser("bench", help="Missing-ratio, view-order or scaling experiments")
    parser.add_argument("--mode", choices=["ratio", "order", "scale"], default="ratio")
    parser.add_argument("--n", type=int, default=1000, help="Samples in the synthetic stream")
    parser.add_argument("--k", type=int, default=5)
    parser.add_argument("--views", type=int, default=3)
    parser.add_argument("--dims", type=int_list, default=None, help="Features per view (default 16 each)")
    parser.add_argument("--separation", type=float, default=10.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epsilon", type=float, default=1e-6)
    parser.add_argument("--max-iters", type=int, default=100)
    parser.add_argument("--restarts", type=int, default=50, help="k-means restarts per run")
    parser.add_argument("--workers", type=int, default=None, help="Parallel cells (default: available CPUs)")
    # ratio mode
    parser.add_argument("--ratios", type=float_list, default=list(DEFAULT_RATIOS))
    parser.add_argument("--reps", type=int, default=10, help="Missing patterns per ratio")
    parser.add_argument("--methods", type=str_list, default=["fcmvc-iv"],
                        help="Any of fcmvc-iv,zero-fill,average-fill")
    # order mode
    parser.add_argument("--perms", type=int, default=10, help="Fusing orders to sample")
    parser.add_argument("--ratio", type=float, default=0.0, help="Missing ratio applied per order")
    # scale mode
    parser.add_argument("--sizes", type=int_list, default=[2000, 4000, 8000])
    parser.add_argument("--scale-k", type=int, default=10)
    parser.add_argument("--scale-d", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--iters", type=int, default=10, help="Inner iterations timed per size")

    parser.add_argument("--out-dir", default=".")
    parser.add_argument("--plot", action="store_true", help="Also render a PNG figure")
    parser.add_argument("--format", choices=["csv", "json"], default="csv")
    parser.set_defaults(handler=handle)


def _spec(args) -> SyntheticSpec:
    dims = args.dims if args.dims is not None else [max(16, args.k)] * max(args.views, 0)
    return build(
        SyntheticSpec, n=args.n, k=args.k, views=args.views, dims=dims, separation=args.separation, seed=args.seed
    )


def handle(args) -> int:
    storage = Storage(args.out_dir)
    logger.bind(mode=args.mode, out_dir=args.out_dir).info("bench started")

    if args.mode == "scale":
        result = scale_sweep(args.sizes, args.scale_k, args.scale_d, args.repeats, args.seed, args.iters)
        storage.write_table(result.points, "results.csv")
        storage.write_json(result, "summary.json")
        if args.plot:
            plot.plot_scaling(result, storage.path("scaling.png"))
        print(render(result.points, args.format))
        return 0

    spec = _spec(args)
    cfg = build(SolverConfig, epsilon=args.epsilon, max_iters=args.max_iters, seed=args.seed)

    if args.mode == "ratio":
        result = ratio_sweep(
            spec, args.ratios, args.reps, cfg, methods=args.methods, restarts=args.restarts, workers=args.workers
        )
        if args.plot:
            plot.plot_ratio_curves(result, storage.path("ratios.png"))
    else:
        views, truth = generate_synthetic(spec)
        orders = [format_order(o) for o in sample_orders(len(views), args.perms, args.seed)]
        reports = order_sweep(
            views, spec.k, truth, cfg, args.perms, args.seed, args.ratio, args.restarts, args.workers
        )
        rows = [
            ExperimentRow(method="fcmvc-iv", ratio=args.ratio, rep=i, order=order, **r.model_dump())
            for i, (order, r) in enumerate(zip(orders, reports))
        ]
        result = summarize(rows)
        if args.plot:
            plot.plot_order_bars(orders, reports, storage.path("orders.png"))

    storage.write_table(result.rows, "results.csv")
    storage.write_json(result.model_dump(include={"summary", "aggregate"}), "summary.json")
    print(render(result.rows, args.format))
    return 0
