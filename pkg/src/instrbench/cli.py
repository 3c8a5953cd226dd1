"""Command-line front end: ``instrbench simulate|fit|characterize|verify|replay``.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import estimation as est
from . import instrument as inst
from . import verify
from .config import ConfigError, build_instrument, config_hash, load_config, parse_config
from .sim import Dataset, ExperimentConfig, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3
MANIFEST_NAME = "manifest.json"
DATASET_NAME = "dataset.jsonl"
ROLES = ("alternating", "tail", "survival")

log = logging.getLogger("instrbench")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class VerificationFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


@dataclass
class RunManifest:
    config: dict
    config_hash: str
    instrument_fingerprint: str
    dataset_path: str
    dataset_sha256: str
    tool_version: str
    started_at: str
    finished_at: str
    result_paths: list

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def read(cls, path: Path) -> RunManifest:
        try:
            doc = json.loads(Path(path).read_text())
            return cls(**doc)
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise DataError(f"{path}: unreadable manifest: {exc}") from None


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _self_contained(config: ExperimentConfig, M: inst.Instrument) -> ExperimentConfig:
    # Replace a file reference by the instrument itself so the snapshot replays anywhere.
    if config.noise_model.get("type") == "branches" and "file" in config.noise_model:
        return replace(config, noise_model={"type": "branches", "instrument": M.to_dict()})
    return config


def simulate_to(config: ExperimentConfig, out: Path, threads: int = 1, base_dir: Path | None = None) -> RunManifest:
    """Simulate ``config`` into ``out`` and write the manifest beside the dataset."""
    started = _now()
    M = build_instrument(config, base_dir=base_dir)
    config = _self_contained(config, M)
    dataset = run_experiment(config, M, threads=threads)
    dataset = Dataset(dataset.config, dataset.records, M.fingerprint())
    out.mkdir(parents=True, exist_ok=True)
    path = dataset.write(out / DATASET_NAME)
    manifest = RunManifest(
        config=config.to_dict(),
        config_hash=config_hash(config),
        instrument_fingerprint=M.fingerprint(),
        dataset_path=DATASET_NAME,
        dataset_sha256=sha256_file(path),
        tool_version=__version__,
        started_at=started,
        finished_at=_now(),
        result_paths=[],
    )
    (out / MANIFEST_NAME).write_text(manifest.to_json())
    return manifest


def _load_dataset(path: str) -> Dataset:
    try:
        return Dataset.read(path)
    except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: malformed dataset: {exc}") from None


def provenance(dataset_path: str) -> dict:
    """Hashes tying a result to its dataset and, when present, its manifest."""
    path = Path(dataset_path)
    manifest = path.parent / MANIFEST_NAME
    return {
        "dataset": str(path),
        "dataset_sha256": sha256_file(path),
        "manifest_sha256": sha256_file(manifest) if manifest.exists() else None,
        "tool_version": __version__,
    }


def _fit_summary(fit: est.FitResult) -> dict:
    return {
        "A": fit.amplitude,
        "A_stderr": fit.amplitude_stderr,
        "mu": fit.base,
        "mu_stderr": fit.base_stderr,
        "nu00": fit.base,
        "nu00_stderr": fit.base_stderr,
        "epsilon": 1 - fit.base,
        "epsilon_stderr": fit.base_stderr,
        "covariance": fit.covariance.tolist(),
        "lengths": fit.lengths.tolist(),
        "dropped_points": fit.dropped,
    }


def fit_dataset(dataset_path: str, out: Path) -> dict:
    """Survival-curve fit; writes ``fit.json`` and ``decay_curve.tsv``."""
    data = _load_dataset(dataset_path)
    curve = est.survival_curve(data)
    try:
        fit = est.fit_exponential(curve)
    except est.FitError as exc:
        raise DataError(str(exc)) from None
    out.mkdir(parents=True, exist_ok=True)
    (out / "decay_curve.tsv").write_text(curve.table())
    doc = {"kind": "survival-fit", "fit": _fit_summary(fit), "provenance": provenance(dataset_path)}
    _write_json(out / "fit.json", doc)
    return doc


def _parse_roles(pairs: list[str]) -> dict[str, str]:
    roles = {}
    for item in pairs:
        role, sep, path = item.partition("=")
        if not sep:
            # An unlabelled dataset fills every role not given explicitly.
            role, path = "*", item
        elif role not in ROLES:
            raise UsageError(f"--dataset: unknown role {role!r}; expected one of {ROLES}")
        roles[role] = path
    default = roles.pop("*", None)
    for role in ROLES:
        if role not in roles and default is not None:
            roles[role] = default
    missing = [r for r in ROLES if r not in roles]
    if missing:
        raise UsageError(f"--dataset: missing dataset for pattern {missing[0]!r} (use {missing[0]}=PATH)")
    return roles


def characterize_datasets(roles: dict[str, str], out: Path) -> dict:
    loaded: dict[str, Dataset] = {}
    for path in set(roles.values()):
        loaded[path] = _load_dataset(path)
    data = {role: loaded[path] for role, path in roles.items()}
    try:
        result = est.characterize_single_qubit(data["alternating"], data["tail"], data["survival"])
    except (est.FitError, est.CharacterizationError, ValueError) as exc:
        raise DataError(str(exc)) from None
    doc = {
        "kind": "single-qubit-characterization",
        "result": result.to_dict(),
        "provenance": {role: provenance(path) for role, path in roles.items()},
    }
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "characterization.json", doc)
    return doc


def replay(manifest_path: Path, out: Path, threads: int = 1) -> dict:
    """Re-simulate from a manifest and compare dataset hashes."""
    manifest = RunManifest.read(manifest_path)
    try:
        config = parse_config(manifest.config, base_dir=manifest_path.parent)
    except ConfigError as exc:
        raise DataError(f"{manifest_path}: {exc}") from None
    fresh = simulate_to(config, out, threads=threads, base_dir=manifest_path.parent)
    report = {
        "manifest": str(manifest_path),
        "expected_sha256": manifest.dataset_sha256,
        "replayed_sha256": fresh.dataset_sha256,
        "identical": fresh.dataset_sha256 == manifest.dataset_sha256,
        "instrument_fingerprint_match": fresh.instrument_fingerprint == manifest.instrument_fingerprint,
    }
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="instrbench", description="Benchmark quantum instruments under random compiling.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a dataset from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--seed-override", type=int)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("fit", help="fit the all-zeros decay of a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default=".")

    p = sub.add_parser("characterize", help="single-qubit characterization from pattern datasets")
    p.add_argument("--dataset", action="append", required=True, metavar="ROLE=PATH",
                   help=f"roles: {', '.join(ROLES)}; a bare PATH fills every missing role")
    p.add_argument("--out", default=".")

    p = sub.add_parser("verify", help="run a property suite")
    p.add_argument("suite", nargs="?", default="all")
    p.add_argument("--out")
    p.add_argument("--seed-override", type=int, default=0)

    p = sub.add_parser("replay", help="re-run a manifest and check the dataset is bit-identical")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    return parser


def _run(args) -> int:
    if args.command == "simulate":
        if args.threads < 1:
            raise UsageError("--threads: must be >= 1")
        config = load_config(args.config)
        if args.seed_override is not None:
            try:
                config = replace(config, seed=args.seed_override)
            except ValueError as exc:
                raise ConfigError(f"--seed-override: {exc}") from None
        manifest = simulate_to(config, Path(args.out), args.threads, base_dir=Path(args.config).parent)
        print(json.dumps({"dataset": str(Path(args.out) / manifest.dataset_path), "sha256": manifest.dataset_sha256}))
        return EXIT_OK
    if args.command == "fit":
        doc = fit_dataset(args.dataset, Path(args.out))
        fit = doc["fit"]
        print(f"nu00 = {fit['nu00']:.6f} +/- {fit['nu00_stderr']:.6f}  A = {fit['A']:.6f}")
        return EXIT_OK
    if args.command == "characterize":
        doc = characterize_datasets(_parse_roles(args.dataset), Path(args.out))
        res = doc["result"]
        lo, hi = res["unordered_pair"]
        print(f"{{nu~01, nu~10}} = {{{lo:.6f}, {hi:.6f}}} (unordered)  nu~11 = {res['nu11_tilde']:.6f}")
        return EXIT_OK
    if args.command == "verify":
        try:
            results = verify.run_suite(args.suite, seed=args.seed_override)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        report = {"suites": [r.to_dict() for r in results], "passed": all(r.passed for r in results)}
        text = json.dumps(report, indent=2, sort_keys=True, default=float)
        if args.out:
            Path(args.out).write_text(text + "\n")
        print(text)
        return EXIT_OK if report["passed"] else EXIT_VERIFY
    if args.command == "replay":
        report = replay(Path(args.manifest), Path(args.out), args.threads)
        print(json.dumps(report, indent=2))
        return EXIT_OK if report["identical"] else EXIT_VERIFY
    raise UsageError(f"unknown command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"instrbench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _run(args)
    except (UsageError, ConfigError) as exc:
        print(f"instrbench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, inst.InstrumentError, OSError) as exc:
        print(f"instrbench: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except np.linalg.LinAlgError as exc:
        print(f"instrbench: numerical error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
