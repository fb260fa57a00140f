"""Command-line entry points for the full pipeline.

Subcommands: gen-data, train, eval, encode, edit, deform, serve. Every
subcommand is deterministic under fixed seeds and inputs; errors exit
nonzero with a single machine-parsable line on stderr.
"""

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import meshio
from .dataset import build_dataset, load_dataset, save_dataset
from .deform import EditSession, WeightConfig
from .encoder import encode_clouds, init_encoder, load_checkpoint, save_checkpoint
from .mesh import normalize, sample_points
from .templates import (
    ParamVector,
    get_template_spec,
    parse_edits,
    spec_from_config,
    spec_to_config,
)
from .training import TrainConfig, evaluate_mve, train

_CONFIG_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}


def _fail(kind: str, message: str) -> int:
    print(f"error: {kind}: {message}", file=sys.stderr)
    return 1


def load_train_config(path=None, overrides=()) -> TrainConfig:
    """Build a TrainConfig from a JSON file plus key=value overrides.

    Starts from the class defaults (alpha/beta/gamma, step budget), then
    applies the file, then the overrides. Unknown keys are rejected.
    """
    data = {}
    if path is not None:
        data = json.loads(Path(path).read_text())
    for kv in overrides:
        if "=" not in kv:
            raise ValueError(f"override {kv!r} is not KEY=VALUE")
        k, v = kv.split("=", 1)
        data[k.strip()] = json.loads(v) if v.strip()[:1] in "0123456789.-tf[{\"" else v
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ValueError(
            f"unknown config keys {sorted(unknown)}; valid keys: {sorted(_CONFIG_KEYS)}"
        )
    class_id = data.pop("class_id", "chair")
    if "mve_thresholds" in data:
        data["mve_thresholds"] = tuple(float(t) for t in data["mve_thresholds"])
    return TrainConfig.for_class(class_id, **data)


def _load_weights(path, spec=None):
    weights, meta = load_checkpoint(path, spec)
    return weights


def cmd_gen_data(args) -> int:
    spec = _spec_for(args)
    realistic = None
    if args.realistic_dir:
        paths = sorted(
            p for p in Path(args.realistic_dir).iterdir()
            if p.suffix.lower() in (".obj", ".ply")
        )
        realistic = paths
    save_dataset(
        spec, args.out, args.synthetic, args.realistic, args.seed,
        sample_count=args.sample_count, realistic_meshes=realistic,
        augment=not args.no_augment,
    )
    manifest = json.loads((Path(args.out) / "manifest.json").read_text())
    n_train = sum(1 for e in manifest["entries"] if e["split"] == "train")
    n_test = len(manifest["entries"]) - n_train
    print(f"wrote {len(manifest['entries'])} examples ({n_train} train / {n_test} test) to {args.out}")
    return 0


def _spec_for(args):
    if getattr(args, "template_config", None):
        return spec_from_config(json.loads(Path(args.template_config).read_text()))
    return get_template_spec(args.class_id)


def cmd_train(args) -> int:
    from . import report

    config = load_train_config(args.config, args.override)
    dataset = load_dataset(args.data) if args.data else None
    spec = dataset.spec if dataset else None
    result = train(config, dataset=dataset, spec=spec, progress=args.progress)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.weights, out / "checkpoint.bin", step=config.steps,
                    optimizer=result.adam.flat_tensors())
    report.write_loss_csv(result.history, out / "loss_curves.csv")
    report.plot_loss_curves(result.history, out / "loss_curves.png")
    if result.mve_history:
        report.write_mve_csv(result.mve_history[-1][1], out / "mve.csv")
        report.plot_mve(result.mve_history, out / "mve.png")
        print(report.format_mve_table(result.mve_history[-1][1]))
    print(f"checkpoint and reports written to {out}")
    return 0


def cmd_eval(args) -> int:
    from . import report

    weights = _load_weights(args.ckpt)
    dataset = load_dataset(args.data)
    test = [e for e in dataset.test if e.kind == "synthetic"]
    mve = evaluate_mve(weights, test, thresholds=args.thresholds)
    print(format_eval_header(weights.spec.class_id, len(test)))
    print(report.format_mve_table(mve))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report.write_mve_csv(mve, out / "mve.csv")
        report.plot_mve([(0, mve)], out / "mve.png")
    return 0


def format_eval_header(class_id: str, n: int) -> str:
    return f"MVE over {n} synthetic test shapes ({class_id})"


def cmd_encode(args) -> int:
    weights = _load_weights(args.ckpt)
    mesh = meshio.load_mesh(args.infile)
    cloud = sample_points(mesh, args.sample_count, args.seed)
    norm_cloud, _ = normalize(cloud)
    t0 = time.perf_counter()
    params = encode_clouds(weights, [norm_cloud])[0]
    elapsed = (time.perf_counter() - t0) * 1e3
    payload = {
        "class_id": weights.spec.class_id,
        "values": [float(v) for v in params.values],
        "named": params.named(),
        "encode_ms": round(elapsed, 3),
    }
    Path(args.out).write_text(json.dumps(payload, indent=1, sort_keys=True))
    print(f"encoded {args.infile} in {elapsed:.1f} ms -> {args.out}")
    return 0


def cmd_edit(args) -> int:
    payload = json.loads(Path(args.params).read_text())
    spec = get_template_spec(payload["class_id"])
    p = ParamVector(spec, np.array(payload["values"], dtype=np.float64))
    edits = parse_edits(json.loads(Path(args.edits).read_text()))
    from .templates import edit_params

    edited = edit_params(p, edits)
    out = {
        "class_id": spec.class_id,
        "values": [float(v) for v in edited.values],
        "named": edited.named(),
    }
    Path(args.out).write_text(json.dumps(out, indent=1, sort_keys=True))
    print(f"applied {len(edits)} edits -> {args.out}")
    return 0


def cmd_deform(args) -> int:
    weights = _load_weights(args.ckpt)
    mesh = meshio.load_mesh(args.infile)
    edits = parse_edits(json.loads(Path(args.edits).read_text())) if args.edits else []
    config = WeightConfig.for_class(weights.spec.class_id)
    if args.mode:
        config = WeightConfig(k=args.k or config.k, mode=args.mode)
    elif args.k:
        config = WeightConfig(k=args.k, mode=config.mode)
    session = EditSession(weights, mesh, config=config,
                          sample_count=args.sample_count, seed=args.seed)
    out_mesh = session.deform(edits)
    meshio.save_mesh(out_mesh, args.out)
    print(f"deformed {args.infile} with {len(edits)} edits -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    checkpoints = {}
    for item in args.ckpt:
        if "=" in item:
            class_id, path = item.split("=", 1)
            weights = _load_weights(path)
            if weights.spec.class_id != class_id:
                raise ValueError(f"checkpoint {path} is for {weights.spec.class_id}, not {class_id}")
        else:
            weights = _load_weights(item)
        checkpoints[weights.spec.class_id] = weights
    app = create_app(checkpoints, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semedit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a dataset on disk")
    p.add_argument("--class", dest="class_id", default="chair")
    p.add_argument("--template-config", default=None, help="JSON template spec override")
    p.add_argument("--synthetic", type=int, default=1000)
    p.add_argument("--realistic", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-count", type=int, default=512)
    p.add_argument("--realistic-dir", default=None, help="directory of OBJ/PLY meshes to ingest")
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train an encoder")
    p.add_argument("--config", default=None, help="JSON training config")
    p.add_argument("--data", default=None, help="gen-data directory (otherwise built in memory)")
    p.add_argument("--out", required=True)
    p.add_argument("--progress", action="store_true")
    p.add_argument("override", nargs="*", help="KEY=VALUE config overrides")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate MVE on a dataset's test split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--thresholds", type=float, nargs="+", default=[0.01, 0.02, 0.03])
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("encode", help="infer template parameters for a mesh")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sample-count", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("edit", help="apply edits to a parameter file")
    p.add_argument("--params", required=True)
    p.add_argument("--edits", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("deform", help="encode, edit and deform a mesh")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--edits", default=None, help="JSON edit list (omit for identity)")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["rigid", "nonrigid"], default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--sample-count", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_deform)

    p = sub.add_parser("serve", help="run the editing service")
    p.add_argument("--ckpt", action="append", required=True,
                   help="checkpoint path, or CLASS=PATH (repeatable)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--ui-dir", default=None, help="static frontend directory to serve at /ui")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        return _fail("not-found", str(e))
    except (ValueError, KeyError, json.JSONDecodeError) as e:
        return _fail("invalid-input", str(e))
    except RuntimeError as e:
        return _fail("runtime", str(e))


if __name__ == "__main__":
    sys.exit(main())
