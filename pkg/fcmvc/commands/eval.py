from fcmvc.commands import render
from fcmvc.services.labeling import align_partitions, evaluate
from fcmvc.services.storage import read_labels, write_json


def register(subparsers) -> None:
    parser = subparsers.add_parser("eval", help="Score a labels file against ground truth")
    parser.add_argument("labels", help="Predicted id,label file")
    parser.add_argument("truth", help="Ground-truth id,label file")
    parser.add_argument("--out", default=None, help="Also write the report JSON here")
    parser.add_argument("--format", choices=["json", "csv"], default="json")
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    pred, truth = align_partitions(read_labels(args.labels), read_labels(args.truth))
    report = evaluate(truth, pred)
    if args.out:
        write_json(report, args.out)
    if args.format == "json":
        print(report.model_dump_json(indent=2))
    else:
        print(render([report], "csv"))
    return 0
