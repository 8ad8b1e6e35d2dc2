import json

from loguru import logger

from fcmvc.commands import build, int_list
from fcmvc.models import SyntheticSpec
from fcmvc.services.harness import generate_synthetic
from fcmvc.services.storage import Storage


def register(subparsers) -> None:
    parser = subparsers.add_parser("synth", help="Generate a planted multi-view cluster stream")
    parser.add_argument("--n", type=int, required=True, help="Number of samples")
    parser.add_argument("--k", type=int, required=True, help="Number of clusters")
    parser.add_argument("--views", type=int, required=True, help="Number of views")
    parser.add_argument("--dims", type=int_list, default=None, help="Features per view, e.g. 16,16,16")
    parser.add_argument("--separation", type=float, default=10.0, help="Center distance in units of sigma")
    parser.add_argument("--sigma", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default=".")
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    dims = args.dims if args.dims is not None else [max(16, args.k)] * max(args.views, 0)
    spec = build(
        SyntheticSpec,
        n=args.n,
        k=args.k,
        views=args.views,
        dims=dims,
        separation=args.separation,
        sigma=args.sigma,
        seed=args.seed,
    )
    views, truth = generate_synthetic(spec)

    storage = Storage(args.out_dir)
    files = [storage.write_view(v, f"view_{v.view_index}.csv") for v in views]
    truth_file = storage.write_labels(truth, "truth.csv")
    logger.bind(out_dir=args.out_dir, views=len(files), n=spec.n, k=spec.k).info("synthetic stream written")
    print(json.dumps({"views": files, "truth": truth_file}, indent=2))
    return 0
