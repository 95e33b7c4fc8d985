"""Command-line entry point: ``subgeo run | presets | replay``.

Exit codes: 0 all checks pass, 1 error, 2 a bound or certificate check
failed, 3 replay produced different bytes.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import tempfile
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import yaml

from . import __version__
from .config import ExperimentConfig, config_from_dict, load_config, parse_config
from .csvio import CERTIFICATE_COLUMNS, RESULT_COLUMNS, to_csv
from .errors import ConfigError, SubgeoError
from .pipeline import run_pipeline

EXIT_OK, EXIT_ERROR, EXIT_FAIL, EXIT_MISMATCH = 0, 1, 2, 3
OUTPUTS = ("results.csv", "certificate.csv")


# ---------------------------------------------------------------------------
# presets

def _preset_dir():
    return resources.files("subgeo") / "presets"


def preset_table() -> list[dict]:
    rows = []
    for entry in sorted(_preset_dir().iterdir(), key=lambda e: e.name):
        if not entry.name.endswith(".yaml"):
            continue
        data = yaml.safe_load(entry.read_text(encoding="utf-8"))
        meta = data.get("preset", {}) or {}
        rows.append({"name": meta.get("name", entry.name[:-5]), "version": meta.get("version", 1),
                     "anchor": meta.get("anchor", ""), "file": entry.name})
    return rows


def preset_text(name: str) -> Optional[str]:
    f = _preset_dir() / f"{name}.yaml"
    return f.read_text(encoding="utf-8") if f.is_file() else None


def list_presets(fmt: str = "text") -> str:
    rows = preset_table()
    if fmt == "csv":
        return to_csv(("name", "version", "anchor"), rows)
    w = max(len(r["name"]) for r in rows)
    return "".join(f"{r['name']:<{w}}  v{r['version']}  {r['anchor']}\n" for r in rows)


# ---------------------------------------------------------------------------
# run / replay

def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _resolve_config(arg: str) -> ExperimentConfig:
    p = Path(arg)
    if p.is_file():
        return load_config(p)
    text = preset_text(arg)
    if text is None:
        raise ConfigError(f"no config file or preset named {arg!r}")
    return parse_config(text, f"preset:{arg}")


def _threads(arg: Optional[int]) -> int:
    if arg is not None:
        return max(1, int(arg))
    env = os.environ.get("SUBGEO_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"SUBGEO_THREADS must be an integer, got {env!r}") from None
    return 1


def execute(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> tuple[int, dict]:
    """Run a pipeline, write outputs and the manifest; returns (exit code, manifest)."""
    st = run_pipeline(cfg, threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    blobs = {"results.csv": to_csv(RESULT_COLUMNS, st.results).encode("utf-8"),
             "certificate.csv": to_csv(CERTIFICATE_COLUMNS, st.certificates).encode("utf-8")}
    for name, data in blobs.items():
        (out_dir / name).write_bytes(data)
    manifest = {
        "experiment_id": cfg.experiment_id,
        "version": __version__,
        "seed": cfg.seed,
        "preset": cfg.preset,
        "config": cfg.to_dict(),
        "outputs": {name: _sha(data) for name, data in blobs.items()},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                           encoding="utf-8")
    ok = all(r["pass_flag"] for r in st.results)
    return (EXIT_OK if ok else EXIT_FAIL), manifest


def _with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    raw = copy.deepcopy(cfg.raw)
    raw["sim"]["seed"] = int(seed)
    return config_from_dict(raw)


def cmd_run(args) -> int:
    cfg = _resolve_config(args.config)
    if args.seed_override is not None:
        cfg = _with_seed(cfg, args.seed_override)
    out = Path(args.output_dir or cfg.output_dir or Path("subgeo_out") / cfg.experiment_id)
    code, manifest = execute(cfg, out, _threads(args.threads))
    print(f"{cfg.experiment_id}: {'pass' if code == EXIT_OK else 'FAIL'} -> {out}")
    return code


def cmd_replay(args) -> int:
    path = Path(args.manifest)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    for key in ("config", "seed", "outputs"):
        if key not in manifest:
            raise ConfigError(f"manifest lacks key '{key}'")
    preset = manifest.get("preset")
    if preset:
        avail = {r["name"]: r["version"] for r in preset_table()}
        if avail.get(preset.get("name")) != preset.get("version"):
            raise ConfigError(f"preset {preset.get('name')!r} version {preset.get('version')!r} is not bundled")
    cfg = _with_seed(config_from_dict(manifest["config"]), manifest["seed"])
    with tempfile.TemporaryDirectory() as tmp:
        _, fresh = execute(cfg, Path(tmp), _threads(args.threads))
    diff = [n for n in OUTPUTS if fresh["outputs"].get(n) != manifest["outputs"].get(n)]
    if diff:
        print(f"replay mismatch in {', '.join(diff)}", file=sys.stderr)
        return EXIT_MISMATCH
    print(f"{cfg.experiment_id}: replay identical")
    return EXIT_OK


def cmd_presets(args) -> int:
    sys.stdout.write(list_presets(args.format or "text"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="subgeo", description="Subgeometric ergodicity experiments")
    ap.add_argument("--version", action="version", version=f"subgeo {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a config file or bundled preset")
    r.add_argument("config")
    r.add_argument("--output-dir")
    r.add_argument("--threads", type=int)
    r.add_argument("--seed-override", type=int)
    p = sub.add_parser("presets", help="list bundled presets")
    p.add_argument("--format", choices=["csv"])
    rp = sub.add_parser("replay", help="rerun a manifest and compare output bytes")
    rp.add_argument("manifest")
    rp.add_argument("--threads", type=int)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "presets": cmd_presets, "replay": cmd_replay}[args.command]
    try:
        return handler(args)
    except (SubgeoError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
