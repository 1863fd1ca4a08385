"""Command-line front end.

Subcommands:

    train    fit a preset model to a dataset, write checkpoint + metrics
    analyze  binarize layer activations, write spectra / fits / info measures
    ising    sample equilibrium lattice patterns into IDX files
    maxent   solve the constrained-entropy problem for a degeneracy spectrum
    kmeans   cluster a dataset and write the cluster-size spectrum
    report   collate run manifests into one markdown summary

Every run directory gets a `run_manifest.json` (sorted keys, relative
paths, content hashes, no timestamps) so that two runs with the same
flags and `--threads 1` produce byte-identical trees.

Exit codes: 0 success, 2 bad usage or config, 3 runtime failure
(I/O, divergence, non-convergence), 4 analysis produced no valid
result (fit failure, infeasible constraint).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3
EXIT_ANALYSIS = 4


class UsageError(ValueError):
    pass


def _set_thread_env(argv) -> None:
    """--threads must take effect before numpy (and its BLAS) loads."""
    n = 1
    for i, tok in enumerate(argv):
        if tok == "--threads" and i + 1 < len(argv):
            n = argv[i + 1]
        elif tok.startswith("--threads="):
            n = tok.split("=", 1)[1]
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_run_manifest(out_dir: Path, command: str, config: dict) -> None:
    """Hash every artifact in the run directory; paths stay relative so
    reruns in a different directory compare byte-for-byte."""
    outputs = {}
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != "run_manifest.json":
            outputs[str(p.relative_to(out_dir))] = _sha256(p)
    manifest = {"command": command, "config": config, "outputs": outputs,
                "format_version": 1}
    _write_json(out_dir / "run_manifest.json", manifest)


def _merge_config(args: argparse.Namespace, parser_defaults: dict) -> None:
    """Config file supplies values for any flag left at its default."""
    if not getattr(args, "config", None):
        return
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {args.config}: {exc}")
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    for key, value in cfg.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise UsageError(f"unknown config key {key!r}")
        if getattr(args, attr) == parser_defaults.get(attr):
            setattr(args, attr, value)


def _load_dataset(args):
    """Shared --data/--labels/--manifest/--dataset/--synthetic resolution."""
    from . import datasets

    sources = [bool(args.data), bool(args.manifest), args.synthetic is not None]
    if sum(sources) != 1:
        raise UsageError(
            "exactly one of --data, --manifest, or --synthetic is required"
        )
    if args.data:
        return datasets.load_idx(args.data, args.labels or None)
    if args.manifest:
        if not args.dataset:
            raise UsageError("--manifest needs --dataset NAME")
        return datasets.load_from_manifest(args.manifest, args.dataset)
    from .linalg import Rng

    return datasets.synthetic_digits(args.synthetic, Rng(args.data_seed))


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", default="", help="IDX image file")
    p.add_argument("--labels", default="", help="IDX label file")
    p.add_argument("--manifest", default="", help="dataset manifest JSON")
    p.add_argument("--dataset", default="", help="entry name in the manifest")
    p.add_argument("--synthetic", type=int, default=None, metavar="N",
                   help="render N synthetic glyph digits instead of loading")
    p.add_argument("--data-seed", type=int, default=0,
                   help="seed for synthetic data rendering")


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--config", default="", help="JSON config file; explicit "
                   "flags override config values")
    p.add_argument("--threads", type=int, default=1,
                   help="compute threads (1 gives byte-reproducible output)")


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    from . import models
    from .linalg import Rng

    if args.preset not in models.PRESETS:
        raise UsageError(f"unknown preset {args.preset!r}; choose from "
                         f"{sorted(models.PRESETS)}")
    preset = models.PRESETS[args.preset]
    cfg = preset.config
    cfg = models.TrainConfig(
        epochs=args.epochs if args.epochs is not None else cfg.epochs,
        batch_size=args.batch_size if args.batch_size is not None else cfg.batch_size,
        learning_rate=args.lr if args.lr is not None else cfg.learning_rate,
        seed=args.seed if args.seed is not None else cfg.seed,
        cd_steps=args.cd_steps if args.cd_steps is not None else cfg.cd_steps,
        snapshot_epochs=tuple(int(e) for e in args.snapshot_epochs.split(","))
        if args.snapshot_epochs else cfg.snapshot_epochs,
    )
    ds = _load_dataset(args)
    test = None
    if args.n_train is not None:
        if not 0 < args.n_train < len(ds):
            raise UsageError("--n-train must split the dataset nontrivially")
        ds, test = ds.split(args.n_train)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    snap_dir = out / "snapshots"

    def snapshot(epoch, model):
        snap_dir.mkdir(exist_ok=True)
        models.save_model(model, snap_dir / f"epoch_{epoch:04d}.ckpt")

    model = models.build_preset_model(preset, Rng(cfg.seed + 1))
    snap = snapshot if cfg.snapshot_epochs else None
    if preset.model_kind == "rbm":
        history = models.train_rbm(model, ds, cfg, snapshot=snap)
    elif preset.model_kind == "classifier":
        history = models.train_classifier(model, ds, cfg, test=test, snapshot=snap)
    else:
        history = models.train_autoencoder(model, ds, cfg, snapshot=snap)

    models.save_model(model, out / "model.ckpt")
    if history:
        cols = list(history[0].keys())
        lines = [",".join(cols)]
        for row in history:
            lines.append(",".join(repr(float(row[c])) if isinstance(row[c], float)
                                 else str(row[c]) for c in cols))
        (out / "metrics.csv").write_text("\n".join(lines) + "\n")
    config = {k: getattr(args, k) for k in
              ("preset", "data", "labels", "manifest", "dataset", "synthetic",
               "data_seed", "n_train", "threads")}
    config.update(epochs=cfg.epochs, batch_size=cfg.batch_size,
                  learning_rate=cfg.learning_rate, seed=cfg.seed,
                  cd_steps=cfg.cd_steps,
                  snapshot_epochs=list(cfg.snapshot_epochs))
    write_run_manifest(out, "train", config)
    print(f"trained {args.preset}: {len(history)} epochs -> {out / 'model.ckpt'}")
    if history:
        last = history[-1]
        print("final: " + ", ".join(f"{k}={v}" for k, v in last.items()))
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def _layer_activations(model, x):
    """(name, activation matrix) per analyzable layer: hidden layers for a
    feed-forward net, the hidden probability layer for an rbm, and the raw
    input under the name 'input'."""
    from . import models

    layers = [("input", x)]
    if isinstance(model, models.RbmModel):
        layers.append(("hidden0", models.rbm_hidden_probs(model, x)))
    else:
        acts = models.mlp_forward(model, x)
        for i in range(1, len(acts) - 1):
            layers.append((f"hidden{i - 1}", acts[i]))
    return layers


def cmd_analyze(args) -> int:
    import numpy as np

    from . import infostats, models, representation

    model = models.load_model(args.model)
    ds = _load_dataset(args)
    if args.thresholds:
        thresholds = [float(t) for t in args.thresholds.split(",")]
    else:
        thresholds = [args.threshold]

    wanted = args.layer
    layers = _layer_activations(model, ds.samples)
    names = [name for name, _ in layers]
    if wanted != "all":
        if wanted not in names:
            raise UsageError(f"--layer must be one of {names} or 'all'")
        layers = [(n, a) for n, a in layers if n == wanted]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sweep = len(thresholds) > 1
    attempted = succeeded = 0
    for thr in thresholds:
        tag = f"_t{thr:g}" if sweep else ""
        for name, act in layers:
            codes = representation.binarize(np.asarray(act), thr)
            hist = representation.count_codes(
                codes, ds.labels, width=act.shape[1]
            )
            spec = representation.degeneracy(hist)
            base = f"{name}{tag}"
            representation.spectrum_to_csv(spec, out / f"spectrum_{base}.csv")
            k_center, m_mean = representation.log_bin(spec)
            representation.binned_to_csv(k_center, m_mean,
                                         out / f"binned_{base}.csv")
            _write_dat(out / f"spectrum_{base}.dat", "k m_k", spec.pairs())
            _write_dat(out / f"binned_{base}.dat", "k_center m_mean",
                       list(zip(k_center.tolist(), m_mean.tolist())))
            info = (infostats.entropies_with_labels(hist) if hist.joint
                    else infostats.summarize(hist))
            payload = json.loads(info.to_json())
            payload["n_distinct_codes"] = hist.n_distinct
            payload["threshold"] = thr
            payload["layer"] = name
            _write_json(out / f"info_{base}.json", payload)
            if name == "input" and wanted != "input":
                continue  # fit learned layers; raw input is context only
            attempted += 1
            try:
                fit = infostats.fit_power_law(spec)
                fit_payload = json.loads(fit.to_json())
                succeeded += 1
            except infostats.FitError as exc:
                fit_payload = {"error": str(exc)}
            fit_payload.update(layer=name, threshold=thr)
            _write_json(out / f"fit_{base}.json", fit_payload)

    config = {k: getattr(args, k) for k in
              ("model", "data", "labels", "manifest", "dataset", "synthetic",
               "data_seed", "layer", "threshold", "thresholds", "threads")}
    write_run_manifest(out, "analyze", config)
    print(f"analyzed {len(layers)} layer(s) x {len(thresholds)} threshold(s)"
          f" -> {out}")
    if attempted and not succeeded:
        print("no layer produced a valid power-law fit", file=sys.stderr)
        return EXIT_ANALYSIS
    return EXIT_OK


def _write_dat(path: Path, header: str, rows) -> None:
    lines = [f"# {header}"]
    for row in rows:
        lines.append(" ".join(repr(float(v)) if isinstance(v, float)
                              else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# ising
# ---------------------------------------------------------------------------

def cmd_ising(args) -> int:
    import numpy as np

    from . import datasets
    from .linalg import Rng

    if args.regime:
        if args.regime not in datasets.ISING_TEMPERATURES:
            raise UsageError(f"--regime must be one of "
                             f"{sorted(datasets.ISING_TEMPERATURES)}")
        temperature = datasets.ISING_TEMPERATURES[args.regime]
    elif args.temperature is not None:
        temperature = args.temperature
    else:
        raise UsageError("need --temperature or --regime")
    try:
        params = datasets.IsingParams(
            side=args.side, coupling=args.coupling, temperature=temperature,
            sweeps_equilibrate=args.equilibrate,
            sweeps_between_samples=args.stride, boundary=args.boundary,
        )
    except ValueError as exc:
        raise UsageError(str(exc))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = datasets.generate_ising_dataset(params, args.samples, Rng(args.seed),
                                         n_chains=args.chains)
    datasets.write_idx_images(ds.samples, out / "patterns.idx",
                              rows=params.side, cols=params.side)
    spins = 2.0 * ds.samples - 1.0
    mags = spins.mean(axis=1)
    energies = np.array([
        datasets.ising_energy(
            datasets.IsingLattice(side=params.side,
                                  spins=spins[i].astype(np.int64)),
            params)
        for i in range(len(spins))
    ])
    stats = {
        "temperature": temperature, "side": params.side,
        "coupling": params.coupling, "n_samples": len(ds),
        "mean_energy": float(energies.mean()),
        "sem_energy": float(energies.std(ddof=1) / np.sqrt(len(energies)))
        if len(energies) > 1 else 0.0,
        "mean_magnetization": float(mags.mean()),
        "mean_abs_magnetization": float(np.abs(mags).mean()),
    }
    _write_json(out / "stats.json", stats)
    config = {k: getattr(args, k) for k in
              ("temperature", "regime", "side", "coupling", "samples", "seed",
               "chains", "equilibrate", "stride", "boundary", "threads")}
    write_run_manifest(out, "ising", config)
    print(f"sampled {len(ds)} patterns at T={temperature} -> {out}")
    print(f"mean energy {stats['mean_energy']:.4f}, "
          f"mean |m| {stats['mean_abs_magnetization']:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# maxent
# ---------------------------------------------------------------------------

def cmd_maxent(args) -> int:
    from . import maxent

    if args.k_max < 2:
        raise UsageError("--k-max must be >= 2")
    if args.m_total < 1:
        raise UsageError("--m-total must be >= 1")
    if (args.beta is None) == (args.resolution is None):
        raise UsageError("need exactly one of --beta or --resolution")

    import numpy as np

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if args.beta is not None:
            problem = maxent.MaxEntProblem(k_max=args.k_max, M=args.m_total,
                                           beta=args.beta)
            closed, iterative = maxent.solve_fixed_beta(problem)
            dist, beta = iterative, args.beta
            gap = float(np.max(np.abs(closed - iterative)))
        else:
            problem = maxent.MaxEntProblem(k_max=args.k_max, M=args.m_total,
                                           R=args.resolution)
            beta, dist = maxent.solve_fixed_resolution(problem)
            gap = float(np.max(np.abs(maxent.closed_form(
                maxent.MaxEntProblem(k_max=args.k_max, M=args.m_total,
                                     beta=beta)) - dist)))
    except ValueError as exc:
        print(f"infeasible problem: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except maxent.ConvergenceError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    residual = maxent.verify_stationarity(dist, beta, args.m_total)
    thermo = maxent.thermo_view(dist, beta, args.m_total)
    spectrum = maxent.solved_spectrum(dist, args.m_total)
    ks = np.arange(1, args.k_max + 1)
    lines = ["k,p_k,m_k"]
    for k, p, mk in zip(ks.tolist(), dist.tolist(), spectrum.tolist()):
        lines.append(f"{k},{p!r},{mk!r}")
    (out / "solution.csv").write_text("\n".join(lines) + "\n")
    _write_dat(out / "solution.dat", "k p_k m_k",
               list(zip(ks.tolist(), dist.tolist(), spectrum.tolist())))
    summary = {
        "beta": float(beta), "k_max": args.k_max, "m_total": args.m_total,
        "closed_vs_iterative_max_gap": gap,
        "stationarity_residual": residual,
        "resolution": thermo.U, "relevance_entropy": thermo.S,
        "effective_temperature": thermo.T_eff,
        "free_energy": thermo.F if np.isfinite(thermo.F) else None,
        "loglog_slope_m_k": maxent.loglog_slope(dist, args.m_total),
    }
    _write_json(out / "summary.json", summary)
    config = {k: getattr(args, k) for k in
              ("beta", "resolution", "k_max", "m_total", "threads")}
    write_run_manifest(out, "maxent", config)
    print(f"beta={beta:.6f}, stationarity residual {residual:.3e}, "
          f"m(k) log-log slope {summary['loglog_slope_m_k']:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# kmeans
# ---------------------------------------------------------------------------

def cmd_kmeans(args) -> int:
    from . import baselines, representation
    from .linalg import Rng

    ds = _load_dataset(args)
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    if args.k > len(ds):
        raise UsageError(f"--k exceeds dataset size {len(ds)}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = baselines.kmeans(ds.samples, args.k, Rng(args.seed),
                              max_iters=args.max_iters)
    spec = baselines.cluster_size_spectrum(result)
    representation.spectrum_to_csv(spec, out / "size_spectrum.csv")
    _write_dat(out / "size_spectrum.dat", "k m_k", spec.pairs())
    summary = {
        "k": args.k, "n_samples": len(ds), "inertia": result.inertia,
        "n_iters": result.n_iters, "converged": result.converged,
        "size_cv": baselines.spectrum_cv(spec),
        "n_nonempty": int(len(spec.k) and spec.m.sum()),
    }
    _write_json(out / "summary.json", summary)
    config = {k: getattr(args, k) for k in
              ("data", "labels", "manifest", "dataset", "synthetic",
               "data_seed", "k", "seed", "max_iters", "threads")}
    write_run_manifest(out, "kmeans", config)
    print(f"k-means k={args.k}: inertia {result.inertia:.2f}, "
          f"size CV {summary['size_cv']:.4f} -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def cmd_report(args) -> int:
    sections = []
    for run in args.runs:
        run = Path(run)
        manifest_path = run / "run_manifest.json"
        if not manifest_path.exists():
            raise UsageError(f"{run} has no run_manifest.json")
        manifest = json.loads(manifest_path.read_text())
        lines = [f"## {run.name} ({manifest['command']})", ""]
        cfg = manifest.get("config", {})
        shown = {k: v for k, v in sorted(cfg.items()) if v not in ("", None)}
        lines.append("| setting | value |")
        lines.append("| --- | --- |")
        for k, v in shown.items():
            lines.append(f"| {k} | {v} |")
        lines.append("")
        for name in sorted(manifest.get("outputs", {})):
            if name.startswith(("fit_", "info_", "summary", "stats")) \
                    and name.endswith(".json"):
                payload = json.loads((run / name).read_text())
                lines.append(f"### {name}")
                lines.append("")
                lines.append("```json")
                lines.append(json.dumps(payload, indent=2, sort_keys=True))
                lines.append("```")
                lines.append("")
        sections.append("\n".join(lines))
    text = "# Run report\n\n" + "\n".join(sections)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote report for {len(args.runs)} run(s) -> {args.out}")
    else:
        print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="critrep",
        description="train compact models and analyze the degeneracy "
                    "spectra of their internal codes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a preset model")
    p.add_argument("--preset", required=True)
    _add_data_flags(p)
    p.add_argument("--n-train", type=int, default=None,
                   help="use the first N samples for training, rest as test")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--cd-steps", type=int, default=None)
    p.add_argument("--snapshot-epochs", default="",
                   help="comma list of epochs to checkpoint (0 = before training)")
    _add_common_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze", help="spectra and information measures of "
                                       "binarized layer activations")
    p.add_argument("--model", required=True, help="checkpoint file")
    _add_data_flags(p)
    p.add_argument("--layer", default="all",
                   help="'all', 'input', or a layer name like hidden1")
    p.add_argument("--threshold", type=float, default=0.5,
                   help="activation > threshold maps to bit 1")
    p.add_argument("--thresholds", default="",
                   help="comma list for a threshold sweep (overrides --threshold)")
    _add_common_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("ising", help="sample equilibrium lattice patterns")
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--regime", default="",
                   help="low | critical | high (preset temperatures)")
    p.add_argument("--side", type=int, default=10)
    p.add_argument("--coupling", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--equilibrate", type=int, default=10_000,
                   help="burn-in sweeps per chain")
    p.add_argument("--stride", type=int, default=10,
                   help="sweeps between recorded samples")
    p.add_argument("--boundary", default="periodic",
                   choices=("periodic", "free"))
    _add_common_flags(p)
    p.set_defaults(func=cmd_ising)

    p = sub.add_parser("maxent", help="solve the constrained-entropy problem")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--resolution", type=float, default=None,
                   help="solve for the multiplier matching this resolution")
    p.add_argument("--k-max", type=int, default=1000)
    p.add_argument("--m-total", type=int, default=100_000,
                   help="total sample count the spectrum refers to")
    _add_common_flags(p)
    p.set_defaults(func=cmd_maxent)

    p = sub.add_parser("kmeans", help="cluster-size spectrum baseline")
    _add_data_flags(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=300)
    _add_common_flags(p)
    p.set_defaults(func=cmd_kmeans)

    p = sub.add_parser("report", help="collate run directories into markdown")
    p.add_argument("runs", nargs="+", help="run directories with manifests")
    p.add_argument("--out", default="", help="write markdown here "
                   "(default: stdout)")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _set_thread_env(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    defaults = {a.dest: a.default for g in parser._subparsers._group_actions
                for a in g.choices[args.command]._actions}
    try:
        _merge_config(args, defaults)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        return EXIT_OK
    except Exception as exc:  # runtime failures map to one exit code
        from . import infostats

        if isinstance(exc, infostats.FitError):
            print(f"analysis failed: {exc}", file=sys.stderr)
            return EXIT_ANALYSIS
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
