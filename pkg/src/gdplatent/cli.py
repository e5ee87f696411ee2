"""
Command-line entry point: ``gdplatent {fit,validate,simulate}``.

Each command writes into a fresh directory next to ``--out`` and renames
it into place only after every artifact is complete, so a failed run
leaves no partial outputs.  Exit codes: 0 success, 2 input or
configuration error, 3 incompatible or unreadable draw store, 4 internal
assertion.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import shutil
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .extend import ExtendedModel, register_extension
from .ingest import IngestError, ingest_files, panel_to_records, simulate_panel, write_records
from .panel import PanelError
from .posterior import SummaryError, diagnose, export_estimates, summarize, write_estimates
from .sampler import (DrawStore, SamplerAssertion, SamplerError, StoreError, run_chains,
                      store_panel)
from .validate import (StoreMismatch, ValidationError, correlation_matrix, coverage,
                       item_bias_profile, rmse_compare, uncertainty_profile, write_correlations,
                       write_coverage, write_profile, write_rmse, write_zscores, zscores)

log = logging.getLogger("gdplatent")

EXIT_OK, EXIT_INPUT, EXIT_STORE, EXIT_INTERNAL = 0, 2, 3, 4
MANIFEST = "run_manifest.json"


class InputError(Exception):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class OutputDir:
    """Build outputs in a scratch directory; rename over ``target`` on success."""

    def __init__(self, target):
        self.target = Path(target).resolve()

    def __enter__(self) -> Path:
        if self.target.exists() and not self.target.is_dir():
            raise InputError(f"--out {self.target} exists and is not a directory")
        if self.target.is_dir() and any(self.target.iterdir()) and not (self.target / MANIFEST).exists():
            raise InputError(f"--out {self.target} is a non-empty directory that is not a previous run")
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.target.name}.", dir=self.target.parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        if self.target.exists():
            shutil.rmtree(self.target)
        self.tmp.rename(self.target)
        return False


def write_manifest(out: Path, command: str, cfg: RunConfig, config_path, inputs, started: str,
                   extra: dict | None = None) -> None:
    outputs = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file())
    manifest = {
        "tool": "gdplatent",
        "version": __version__,
        "command": command,
        "config": str(Path(config_path).resolve()),
        "config_sha256": cfg.digest,
        "inputs": {str(Path(p).resolve()): sha256_file(p) for p in inputs},
        "seed": cfg.plan.seed,
        "started": started,
        "finished": _now(),
        "outputs": outputs,
        **(extra or {}),
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.plan = dataclasses.replace(cfg.plan, seed=args.seed)
    return cfg


def build_model(cfg: RunConfig):
    """Ingest the configured inputs; attach extension links if any."""
    if not cfg.inputs:
        raise InputError("no input files configured (key 'inputs')")
    for p in cfg.inputs:
        if not p.is_file():
            raise InputError(f"input file not found: {p}")
    panel = ingest_files(cfg.inputs, cfg.items, cfg.policy, cfg.last_year, cfg.anchors, cfg.delimiter)
    model = ExtendedModel(panel)
    for link in cfg.extensions:
        items = [it for it in panel.items if it.item_id in link.items]
        model = register_extension(model, link, items)
    return model


def cmd_fit(args) -> int:
    cfg = _load(args)
    started = _now()
    model = build_model(cfg)
    with OutputDir(args.out) as out:
        store = run_chains(model, cfg.priors, cfg.plan, out / "draws")
        summary = summarize(store)
        write_estimates(out / "estimates.csv", export_estimates(summary, model.panel))
        if store.n_draws >= 10:
            (out / "convergence.txt").write_text(diagnose(store).to_text(), encoding="utf-8")
        else:
            (out / "convergence.txt").write_text(
                f"psr_available = false\nnote = fewer than 10 draws per chain ({store.n_draws})\n",
                encoding="utf-8")
        write_manifest(out, "fit", cfg, args.config, cfg.inputs, started)
    log.info("fit written to %s", args.out)
    return EXIT_OK


def _open_store(path) -> DrawStore:
    path = Path(path)
    if (path / "draws" / "manifest.json").is_file():
        path = path / "draws"
    return DrawStore(path)


def cmd_validate(args) -> int:
    cfg = _load(args)
    started = _now()
    stores = [_open_store(p) for p in args.stores]
    if len(stores) > 2:
        raise InputError("validate takes one or two draw stores")
    panel = store_panel(stores[0])
    if len(stores) == 2 and not stores[0].coords_match(stores[1]):
        raise StoreMismatch(f"{stores[0].path} and {stores[1].path} cover different cells")
    summary = summarize(stores[0])
    with OutputDir(args.out) as out:
        zt = zscores(panel, summary)
        write_zscores(out / "zscores.csv", zt)
        if len(zt.z[zt.valid]):
            write_coverage(out / "coverage.csv", coverage(zt))
        write_profile(out / "item_bias.csv", item_bias_profile(zt, panel))
        write_profile(out / "uncertainty.csv", uncertainty_profile(panel, summary))
        write_correlations(out / "correlations.csv", out / "correlations_long.csv",
                           correlation_matrix(panel, summary))
        if len(stores) == 2:
            targets = [i for i in cfg.rmse_items if i in panel.item_ids]
            write_rmse(out / "rmse.csv", rmse_compare(stores[0], stores[1], panel, targets))
        write_manifest(out, "validate", cfg, args.config, [], started,
                       {"stores": [str(s.path.resolve()) for s in stores]})
    log.info("validation tables written to %s", args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args)
    started = _now()
    panel, truth = simulate_panel(cfg.generative, cfg.plan.seed)
    records = panel_to_records(panel, cfg.policy)
    if not records:
        log.warning("simulated panel has no observed cells (missing rate %s)", cfg.generative.missing_rate)
    with OutputDir(args.out) as out:
        write_records(out / "panel.csv", records)
        (out / "truth.json").write_text(truth.to_json() + "\n", encoding="utf-8")
        write_manifest(out, "simulate", cfg, args.config, [], started)
    log.info("simulated %d observations into %s", len(records), args.out)
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "validate": cmd_validate, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gdplatent", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("fit", "ingest inputs, run the sampler and write estimates"),
                            ("validate", "validity-check tables for one or two fitted runs"),
                            ("simulate", "write a synthetic panel and its true parameters")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="key = value configuration file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        p.add_argument("--quiet", action="store_true", help="only report warnings and errors")
        if name == "validate":
            p.add_argument("stores", nargs="+", help="fit output directories or draw stores")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (StoreError, StoreMismatch) as err:
        log.error("%s", err)
        return EXIT_STORE
    except (ConfigError, IngestError, PanelError, InputError, ValidationError, SummaryError,
            KeyError) as err:
        log.error("%s", err.args[0] if isinstance(err, KeyError) and err.args else err)
        return EXIT_INPUT
    except OSError as err:
        name = f" {err.filename}" if getattr(err, "filename", None) else ""
        log.error("%s%s", err.strerror or err, name and f":{name}")
        return EXIT_INPUT
    except (SamplerAssertion, SamplerError, AssertionError) as err:
        log.error("internal error: %s", err)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
