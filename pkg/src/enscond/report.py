"""Plain-text output formats and run manifests.

Tables are whitespace-separated columns under a ``#``-prefixed header;
reports are ``key = value`` lines. Every file starts with the hash of the
manifest that produced it. Floats are written with 17 significant digits so
files round-trip exactly and compare byte-for-byte between runs.
"""

from __future__ import annotations

import datetime as _dt
import gzip
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__


def fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return "%.17g" % x
    try:
        return "%.17g" % float(x)
    except (TypeError, ValueError):
        return str(x)


@dataclass
class RunManifest:
    subcommand: str
    config_path: str
    seed: int
    params: dict
    spectrum: dict
    outputs: list = field(default_factory=list)
    threads: int = 1
    version: str = __version__
    wall_clock: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))

    def hash(self) -> str:
        """Digest of everything that determines the numbers.

        Thread count, wall-clock time and output locations are left out so
        that reruns, including on more threads, produce identical files.
        """
        payload = {
            "subcommand": self.subcommand,
            "seed": self.seed,
            "params": {k: fmt(v) for k, v in sorted(self.params.items())},
            "spectrum": self.spectrum,
            "version": self.version,
        }
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def write(self, out_dir: Path) -> Path:
        path = Path(out_dir) / "manifest.txt"
        pairs = [
            ("manifest_hash", self.hash()),
            ("subcommand", self.subcommand),
            ("config_path", self.config_path),
            ("seed", str(self.seed)),
            ("threads", str(self.threads)),
            ("version", self.version),
            ("wall_clock", self.wall_clock),
        ]
        pairs += [(f"spectrum.{k}", v) for k, v in self.spectrum.items()]
        pairs += [(f"param.{k}", fmt(v)) for k, v in sorted(self.params.items())]
        pairs += [(f"output.{i}", str(p)) for i, p in enumerate(self.outputs)]
        path.write_text("".join(f"{k} = {v}\n" for k, v in pairs), encoding="utf-8")
        return path


def _open(path: Path, compress: bool):
    if compress:
        # mtime=0 keeps compressed output byte-identical between runs
        raw = open(path, "wb")
        return raw, gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0)
    fh = open(path, "w", encoding="utf-8")
    return fh, None


def write_table(path: Path, header: list[str], rows, manifest_hash: str, compress: bool = False) -> Path:
    path = Path(path)
    raw, gz = _open(path, compress)
    try:
        lines = [f"# manifest_hash = {manifest_hash}\n", "# " + " ".join(header) + "\n"]
        lines += [" ".join(fmt(x) for x in row) + "\n" for row in rows]
        text = "".join(lines)
        if gz is not None:
            gz.write(text.encode("utf-8"))
        else:
            raw.write(text)
    finally:
        if gz is not None:
            gz.close()
        raw.close()
    return path


def write_report(path: Path, pairs, manifest_hash: str) -> Path:
    path = Path(path)
    lines = [f"manifest_hash = {manifest_hash}\n"]
    lines += [f"{k} = {fmt(v) if not isinstance(v, str) else v}\n" for k, v in pairs]
    path.write_text("".join(lines), encoding="utf-8")
    return path


def read_report(path: Path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k.strip()] = v.strip()
    return out


def read_table(path: Path):
    """Header names and numeric rows of a table written by :func:`write_table`."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = lines[1].lstrip("# ").split()
    rows = [line.split() for line in lines[2:]]
    return header, rows
