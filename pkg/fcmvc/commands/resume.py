import json

from loguru import logger

from fcmvc.commands import add_solver_flags, build
from fcmvc.errors import ConfigurationError
from fcmvc.models import RunConfig
from fcmvc.services.solver import final_labels, integrate_view
from fcmvc.services.storage import read_checkpoint, read_view, write_checkpoint, write_labels


def register(subparsers) -> None:
    parser = subparsers.add_parser("resume", help="Fuse one more view into a checkpointed state")
    parser.add_argument("view", help="The newly arrived view file")
    parser.add_argument("--checkpoint", required=True, help="State to resume from")
    parser.add_argument("--out", default=None, help="Where to write the new state (default: replace --checkpoint)")
    parser.add_argument("--labels", default=None, help="Also label all samples and write them here")
    add_solver_flags(parser, k_required=False)
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    state = read_checkpoint(args.checkpoint)
    if args.k is not None and args.k != state.k:
        raise ConfigurationError(f"--k {args.k} does not match the checkpoint's k={state.k}")
    cfg = build(
        RunConfig,
        k=state.k,
        epsilon=args.epsilon,
        max_iters=args.max_iters,
        kmeans_restarts=args.restarts,
        seed=args.seed,
        init=args.init,
        scaling=args.scaling,
    )

    batch = read_view(args.view, view_index=state.views_seen + 1)
    state = integrate_view(state, batch, cfg.solver_config())

    out = args.out or args.checkpoint
    write_checkpoint(state, out)
    if args.labels:
        write_labels(final_labels(state, cfg.k, cfg.kmeans_restarts, cfg.seed), args.labels)

    diag = state.last_diag
    logger.bind(view_index=diag.view_index, n_union=diag.n_union, checkpoint=out).info("resume finished")
    print(json.dumps({
        "checkpoint": out,
        "views_seen": state.views_seen,
        "iters": diag.iters,
        "converged": diag.converged,
    }, indent=2))
    return 0
