import json
import os

from loguru import logger

from fcmvc.services.harness import apply_missing
from fcmvc.services.storage import Storage, read_views


def register(subparsers) -> None:
    parser = subparsers.add_parser("corrupt", help="Remove samples from complete views")
    parser.add_argument("views", nargs="+", help="View files in arrival order")
    parser.add_argument("--ratio", type=float, required=True, help="Missing ratio r in [0, 0.5]")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", required=True)
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    views = read_views(args.views)
    incomplete, pattern = apply_missing(views, args.ratio, args.seed)

    storage = Storage(args.out_dir)
    manifest = {"ratio": pattern.ratio, "seed": pattern.seed, "views": []}
    for path, batch, dropped in zip(args.views, incomplete, pattern.dropped):
        name = os.path.basename(path)
        storage.write_view(batch, name)
        manifest["views"].append({"file": name, "retained": batch.n_samples, "dropped": dropped})
    storage.write_json(manifest, "pattern.json")

    logger.bind(ratio=args.ratio, seed=args.seed, out_dir=args.out_dir).info("missing pattern written")
    print(json.dumps({v["file"]: v["retained"] for v in manifest["views"]}, indent=2))
    return 0
