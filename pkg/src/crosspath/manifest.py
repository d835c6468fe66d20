"""Run manifests: the reproducibility record of every CLI invocation.

Each artifact-producing command writes exactly one manifest.json into its
output directory holding the fully resolved configuration, the seed, input
and artifact checksums, tool version and wall clock. Re-running the same
subcommand with the manifest's config reproduces the artifacts byte for
byte (the manifest itself is excluded from that comparison since it records
wall-clock time).
"""

import hashlib
import json
import os
import time

from . import SCHEMA_VERSION, __version__

MANIFEST_NAME = "manifest.json"


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fp:
        for chunk in iter(lambda: fp.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, subcommand, config, seed, inputs, artifacts,
                   wall_clock_s):
    """inputs: iterable of paths; artifacts: paths relative to out_dir."""
    manifest = {
        "schema": SCHEMA_VERSION,
        "tool_version": __version__,
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "artifacts": {str(rel): sha256_file(os.path.join(out_dir, rel))
                      for rel in artifacts},
        "wall_clock_s": wall_clock_s,
    }
    path = os.path.join(out_dir, MANIFEST_NAME)
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(manifest, fp, indent=2, sort_keys=True)
        fp.write("\n")
    return path


def load_manifest(path):
    with open(path, "r", encoding="utf-8") as fp:
        return json.load(fp)


class Stopwatch:
    def __enter__(self):
        self.t0 = time.time()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.time() - self.t0
        return False
