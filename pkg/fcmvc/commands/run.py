import json

from loguru import logger

from fcmvc.commands import add_solver_flags, build
from fcmvc.errors import FcmvcError
from fcmvc.models import RunConfig, RunDiagnostics
from fcmvc.services.harness import solve_filled
from fcmvc.services.solver import final_labels, run_stream
from fcmvc.services.storage import Storage, read_views, write_checkpoint


def register(subparsers) -> None:
    parser = subparsers.add_parser("run", help="Fuse view files in order and label the samples")
    parser.add_argument("views", nargs="+", help="View files in arrival order")
    add_solver_flags(parser)
    parser.add_argument("--fill", choices=["none", "zero", "average"], default="none",
                        help="Complete missing columns before fusing (baseline)")
    parser.add_argument("--out-dir", default=".")
    parser.add_argument("--checkpoint", default=None, help="Write the final state here")
    parser.set_defaults(handler=handle)


def run_config(args, **overrides) -> RunConfig:
    fields = dict(
        k=args.k,
        epsilon=args.epsilon,
        max_iters=args.max_iters,
        kmeans_restarts=args.restarts,
        seed=args.seed,
        init=args.init,
        scaling=args.scaling,
    )
    fields.update(overrides)
    return build(RunConfig, **fields)


def handle(args) -> int:
    cfg = run_config(args, fill=args.fill)
    storage = Storage(args.out_dir)
    method = "fcmvc-iv" if cfg.fill == "none" else f"{cfg.fill}-fill"
    diagnostics = RunDiagnostics(k=cfg.k, method=method)

    try:
        views = read_views(args.views)
        if cfg.fill == "none":
            state = run_stream(views, cfg.k, cfg.solver_config(), on_view=diagnostics.views.append)
        else:
            state = solve_filled(views, cfg.fill, cfg.k, cfg.solver_config(), on_view=diagnostics.views.append)
        partition = final_labels(state, cfg.k, cfg.kmeans_restarts, cfg.seed)
    except FcmvcError as e:
        diagnostics.error = f"{type(e).__name__}: {e}"
        raise
    finally:
        storage.write_json(diagnostics, "diagnostics.json")

    labels_file = storage.write_labels(partition, "labels.csv")
    if args.checkpoint:
        write_checkpoint(state, args.checkpoint)
    logger.bind(views=len(views), n=state.n_union, k=cfg.k, method=method).info("run finished")
    print(json.dumps({
        "labels": labels_file,
        "views": [
            {"view_index": d.view_index, "iters": d.iters, "converged": d.converged} for d in diagnostics.views
        ],
    }, indent=2))
    return 0
