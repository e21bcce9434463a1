"""Command-line pipeline: synth, privatize, fit, evaluate, verify.

Every command writes ``<output>.manifest.json`` holding the resolved
configuration, the seed, the package and format versions, so a run can be
repeated byte-for-byte.  Settings can come from ``--config`` (JSON or YAML);
explicit flags override the file.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from privpf import __version__
from privpf.data_io import (FORMAT_VERSIONS, read_mask, read_privatized, read_sparse_counts,
                            read_trace, write_json, write_mask, write_privatized,
                            write_sparse_counts, write_state, write_table, write_trace)
from privpf.evaluation import heldout_mask_top_senders, mae, topic_quality
from privpf.exceptions import ConfigurationError, PrivPFError
from privpf.mcmc import MODES, Schedule, run
from privpf.models import make_model
from privpf.privacy import PrivacyParams, precision_from_mean, privatize, verify_privacy_ratio

log = logging.getLogger("privpf")

THREADS_ENV = "PRIVPF_THREADS"
METRICS = ("mae", "npmi", "coherence")


def _add_config(p):
    p.add_argument("--config", type=Path, help="JSON or YAML file of defaults; flags win")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default ${THREADS_ENV} or 1); recorded in the manifest")
    p.add_argument("--seed", type=int, help="master random seed")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="privpf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="draw true factors and counts from a model")
    _add_config(p)
    p.add_argument("--model", choices=("topic", "mmsb"))
    p.add_argument("--docs", type=int, help="documents (topic model)")
    p.add_argument("--vocab", type=int, help="vocabulary size (topic model)")
    p.add_argument("--topics", type=int)
    p.add_argument("--actors", type=int, help="actors (mmsb)")
    p.add_argument("--communities", type=int)
    p.add_argument("--a0", type=float)
    p.add_argument("--b0", type=float)
    p.add_argument("--exclude-diagonal", action="store_true", default=None)
    p.add_argument("--output", type=Path, help="count file; the state goes to <output>.state.npz")

    p = sub.add_parser("privatize", help="add two-sided geometric noise to a count file")
    _add_config(p)
    p.add_argument("--input", type=Path)
    p.add_argument("--output", type=Path)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--precision", type=int, help="precision N")
    p.add_argument("--precision-from-data", choices=("mean",),
                   help="set N to the rounded empirical cell mean")
    p.add_argument("--granularity", choices=("cell", "document"))

    p = sub.add_parser("fit", help="run the sampler")
    _add_config(p)
    p.add_argument("--input", type=Path, help="privatized file (proposed, naive) or counts (non_private)")
    p.add_argument("--output", type=Path, help="trace file (.npz)")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--model", choices=("topic", "mmsb"))
    p.add_argument("--components", type=int, help="topics K or communities C")
    p.add_argument("--a0", type=float)
    p.add_argument("--b0", type=float)
    p.add_argument("--exclude-diagonal", action="store_true", default=None)
    p.add_argument("--iters", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--mask", type=Path, help="held-out cells as a triplet file")
    p.add_argument("--heldout-top-k", type=int,
                   help="hold out cells of the top-k senders/recipients of --truth")
    p.add_argument("--truth", type=Path, help="true counts, needed by --heldout-top-k")

    p = sub.add_parser("evaluate", help="score one or more traces against true counts")
    _add_config(p)
    p.add_argument("--trace", type=Path, nargs="+")
    p.add_argument("--truth", type=Path)
    p.add_argument("--metric", choices=METRICS, nargs="+")
    p.add_argument("--top", type=int, help="top words per topic")
    p.add_argument("--mask", type=Path, help="score MAE on these held-out cells only")
    p.add_argument("--heldout-top-k", type=int)
    p.add_argument("--output", type=Path, help="metrics file (.json or .tsv)")

    p = sub.add_parser("verify", help="enumerate the mechanism's worst-case log-ratio")
    _add_config(p)
    p.add_argument("--precision", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--value-bound", type=int)
    p.add_argument("--output", type=Path, help="report file (.json); stdout only if omitted")
    return parser


DEFAULTS = {
    "synth": dict(model=None, docs=None, vocab=None, topics=None, actors=None, communities=None,
                  a0=0.1, b0=1.0, exclude_diagonal=False, output=None, seed=0),
    "privatize": dict(input=None, output=None, epsilon=None, precision=None,
                      precision_from_data=None, granularity="cell", seed=0),
    "fit": dict(input=None, output=None, mode="proposed", model=None, components=None, a0=0.1,
                b0=1.0, exclude_diagonal=False, iters=None, burn_in=None, thin=1, mask=None,
                heldout_top_k=None, truth=None, seed=0),
    "evaluate": dict(trace=None, truth=None, metric=["mae"], top=10, mask=None,
                     heldout_top_k=None, output=None, seed=None),
    "verify": dict(precision=None, alpha=None, epsilon=None, value_bound=None, output=None,
                   seed=None),
}


def _load_config_file(path):
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: config must be a mapping")
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve_config(args):
    """Merge defaults, the config file and explicit flags (in that order)."""
    cfg = dict(DEFAULTS[args.command])
    if args.config is not None:
        file_cfg = _load_config_file(args.config)
        unknown = set(file_cfg) - set(cfg) - {"threads"}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    threads = args.threads if args.threads is not None else cfg.get("threads")
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1"))
    if threads < 1:
        raise ConfigurationError("--threads must be at least 1")
    cfg["threads"] = threads
    for key in ("input", "output", "mask", "truth"):
        if cfg.get(key) is not None:
            cfg[key] = Path(cfg[key])
    if args.command == "evaluate" and cfg["trace"] is not None:
        cfg["trace"] = [Path(t) for t in np.atleast_1d(cfg["trace"])]
    return cfg


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise ConfigurationError(f"missing required setting(s): {flags}")


def validate(command, cfg):
    """Cross-field checks; runs before any file is read or written."""
    if command == "synth":
        _require(cfg, "model", "output")
        if cfg["model"] == "topic":
            _require(cfg, "docs", "vocab", "topics")
            dims = (cfg["docs"], cfg["vocab"], cfg["topics"])
        else:
            _require(cfg, "actors", "communities")
            dims = (cfg["actors"], cfg["communities"])
        if min(dims) < 1:
            raise ConfigurationError("dimensions must be positive")
        if cfg["a0"] <= 0 or cfg["b0"] <= 0:
            raise ConfigurationError("--a0 and --b0 must be positive")
    elif command == "privatize":
        _require(cfg, "input", "output", "epsilon")
        if (cfg["precision"] is None) == (cfg["precision_from_data"] is None):
            raise ConfigurationError("give exactly one of --precision and --precision-from-data")
        if cfg["epsilon"] <= 0:
            raise ConfigurationError("--epsilon must be positive")
        if cfg["precision"] is not None and cfg["precision"] < 1:
            raise ConfigurationError("--precision must be a positive integer")
    elif command == "fit":
        _require(cfg, "input", "output", "model", "components", "iters", "burn_in")
        Schedule(cfg["iters"], cfg["burn_in"], cfg["thin"], cfg["mode"])
        if cfg["components"] < 1:
            raise ConfigurationError("--components must be positive")
        if cfg["mask"] is not None and cfg["heldout_top_k"] is not None:
            raise ConfigurationError("--mask and --heldout-top-k are mutually exclusive")
        if cfg["heldout_top_k"] is not None and cfg["truth"] is None:
            raise ConfigurationError("--heldout-top-k needs --truth")
        if cfg["exclude_diagonal"] and cfg["model"] != "mmsb":
            raise ConfigurationError("--exclude-diagonal applies to the mmsb model only")
    elif command == "evaluate":
        _require(cfg, "trace", "truth")
        bad = set(cfg["metric"]) - set(METRICS)
        if bad:
            raise ConfigurationError(f"unknown metric(s) {sorted(bad)}")
        if cfg["mask"] is not None and cfg["heldout_top_k"] is not None:
            raise ConfigurationError("--mask and --heldout-top-k are mutually exclusive")
        if cfg["output"] is not None and cfg["output"].suffix not in (".json", ".tsv"):
            raise ConfigurationError("--output must end in .json or .tsv")
    elif command == "verify":
        _require(cfg, "precision", "value_bound")
        if (cfg["alpha"] is None) == (cfg["epsilon"] is None):
            raise ConfigurationError("give exactly one of --alpha and --epsilon")


def _manifest(command, cfg, outputs, extra=None):
    return {
        "command": command,
        "config": {k: (str(v) if isinstance(v, Path) else
                       [str(x) for x in v] if isinstance(v, list) and v and isinstance(v[0], Path)
                       else v) for k, v in cfg.items()},
        "seed": cfg.get("seed"),
        "privpf_version": __version__,
        "numpy_version": np.__version__,
        "format_versions": FORMAT_VERSIONS,
        "outputs": [str(o) for o in outputs],
        **(extra or {}),
    }


def _write_manifest(command, cfg, outputs, extra=None, where=None):
    where = where or outputs[0]
    path = Path(f"{where}.manifest.json")
    write_json(path, _manifest(command, cfg, outputs, extra))
    return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(cfg):
    if cfg["model"] == "topic":
        model = make_model("topic", cfg["topics"], cfg["a0"], cfg["b0"])
        shape = (cfg["docs"], cfg["vocab"])
    else:
        model = make_model("mmsb", cfg["communities"], cfg["a0"], cfg["b0"],
                           include_diagonal=not cfg["exclude_diagonal"])
        shape = (cfg["actors"], cfg["actors"])
    state, counts = model.generate(shape, np.random.default_rng(cfg["seed"]))
    out = cfg["output"]
    state_path = Path(f"{out}.state.npz")
    write_sparse_counts(out, counts)
    write_state(state_path, model, state)
    print(f"{counts.n_rows}x{counts.n_cols} counts, {counts.nnz} nonzero, mean {counts.mean():.4f}")
    _write_manifest("synth", cfg, [out, state_path])
    return 0


def cmd_privatize(cfg):
    counts = read_sparse_counts(cfg["input"])
    n = cfg["precision"] if cfg["precision"] is not None else precision_from_mean(counts)
    params = PrivacyParams.from_budget(n, cfg["epsilon"], cfg["granularity"])
    noisy = privatize(counts, params, np.random.default_rng(cfg["seed"]), seed=cfg["seed"])
    write_privatized(cfg["output"], noisy)
    print(f"N={params.precision_n} epsilon={params.epsilon:g} alpha={params.alpha:.12g}")
    _write_manifest("privatize", cfg, [cfg["output"]],
                    {"resolved": {"precision_n": params.precision_n, "alpha": params.alpha}})
    return 0


def _load_fit_input(path, mode):
    if mode == "non_private":
        return read_sparse_counts(path)
    return read_privatized(path)


def _resolve_mask(cfg, shape):
    if cfg.get("mask") is not None:
        mask = read_mask(cfg["mask"])
    elif cfg.get("heldout_top_k") is not None:
        mask = heldout_mask_top_senders(read_sparse_counts(cfg["truth"]), cfg["heldout_top_k"])
    else:
        return None
    if mask.shape != tuple(shape):
        raise ConfigurationError(f"mask shape {mask.shape} does not match data {tuple(shape)}")
    return mask


def cmd_fit(cfg):
    data = _load_fit_input(cfg["input"], cfg["mode"])
    kw = {"include_diagonal": not cfg["exclude_diagonal"]} if cfg["model"] == "mmsb" else {}
    model = make_model(cfg["model"], cfg["components"], cfg["a0"], cfg["b0"], **kw)
    schedule = Schedule(cfg["iters"], cfg["burn_in"], cfg["thin"], cfg["mode"])
    mask = _resolve_mask(cfg, data.shape)
    trace = run(data, model, schedule, np.random.default_rng(cfg["seed"]), mask=mask,
                seed=cfg["seed"])
    outputs = [cfg["output"]]
    write_trace(cfg["output"], trace)
    if mask is not None:
        mask_path = Path(f"{cfg['output']}.mask.txt")
        write_mask(mask_path, mask)
        outputs.append(mask_path)
    print(f"{cfg['mode']}: {trace.n_samples} samples, final log-joint {trace.log_joint[-1]:.4f}")
    _write_manifest("fit", cfg, outputs)
    return 0


def cmd_evaluate(cfg):
    truth = read_sparse_counts(cfg["truth"])
    rows = []
    for path in cfg["trace"]:
        trace = read_trace(path)
        mask = _resolve_mask(cfg, truth.shape)
        row = {"trace": str(path), "mode": trace.schedule.mode, "model": trace.model_config["model"]}
        for metric in cfg["metric"]:
            if metric == "mae":
                row["mae"] = mae(trace.posterior_mean_rates, truth, mask)
                row["cells"] = "heldout" if mask is not None else "all"
                continue
            if row["model"] != "topic":
                raise ConfigurationError(f"metric {metric!r} needs a topic-model trace")
            quality = topic_quality(trace, truth, cfg["top"])
            per_topic, mean = quality[metric]
            row[metric] = mean
            row[f"{metric}_per_topic"] = per_topic.tolist()
        rows.append(row)
    for row in rows:
        print("\t".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                        for k, v in row.items() if not k.endswith("_per_topic")))
    outputs = []
    if cfg["output"] is not None:
        if cfg["output"].suffix == ".json":
            write_json(cfg["output"], rows)
        else:
            header = [k for k in rows[0] if not k.endswith("_per_topic")]
            write_table(cfg["output"], header, [[r[k] for k in header] for r in rows])
        outputs.append(cfg["output"])
    where = outputs[0] if outputs else f"{cfg['trace'][0]}.evaluate"
    _write_manifest("evaluate", cfg, outputs, where=where)
    return 0


def cmd_verify(cfg):
    if cfg["alpha"] is not None:
        params = PrivacyParams.from_alpha(cfg["precision"], cfg["alpha"])
    else:
        params = PrivacyParams.from_budget(cfg["precision"], cfg["epsilon"])
    worst = verify_privacy_ratio(params, cfg["value_bound"])
    report = {"precision_n": params.precision_n, "alpha": params.alpha, "epsilon": params.epsilon,
              "value_bound": cfg["value_bound"], "max_log_ratio": worst,
              "within_budget": worst <= params.epsilon + 1e-9}
    print(f"max log-ratio {worst:.12g} (budget {params.epsilon:.12g})")
    if cfg["output"] is not None:
        write_json(cfg["output"], report)
        _write_manifest("verify", cfg, [cfg["output"]])
    if not report["within_budget"]:
        print("privacy ratio exceeds the budget", file=sys.stderr)
        return 3
    return 0


COMMANDS = {"synth": cmd_synth, "privatize": cmd_privatize, "fit": cmd_fit,
            "evaluate": cmd_evaluate, "verify": cmd_verify}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        validate(args.command, cfg)
        return COMMANDS[args.command](cfg)
    except (PrivPFError, OSError) as exc:
        print(f"privpf {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
