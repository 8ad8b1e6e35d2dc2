"""One module per subcommand; each exposes `register(subparsers)`."""
import argparse
import io
import json
from typing import Sequence

import pandas as pd
from pydantic import BaseModel, ValidationError

from fcmvc.errors import ConfigurationError


def build(model_cls, **fields):
    """Instantiate a pydantic model, reporting invalid values as a configuration error."""
    try:
        return model_cls(**fields)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors())
        raise ConfigurationError(problems) from None


def int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def add_solver_flags(parser: argparse.ArgumentParser, k_required: bool = True) -> None:
    parser.add_argument("--k", type=int, required=k_required, default=None, help="Number of clusters")
    parser.add_argument("--epsilon", type=float, default=1e-6, help="Relative objective tolerance")
    parser.add_argument("--max-iters", type=int, default=100, help="Inner iterations per view")
    parser.add_argument("--restarts", type=int, default=50, help="k-means restarts")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--init", choices=["svd", "random"], default="svd")
    parser.add_argument("--scaling", choices=["sample", "none"], default="sample")


def render(rows: Sequence[BaseModel], fmt: str) -> str:
    if fmt == "json":
        return json.dumps([r.model_dump() for r in rows], indent=2)
    buf = io.StringIO()
    pd.DataFrame([r.model_dump() for r in rows]).to_csv(buf, index=False)
    return buf.getvalue().rstrip("\n")
