"""Download the benchmark datasets described in schemas/sources.json.

    python scripts/fetch_datasets.py bank adult --dest data/
    python scripts/fetch_datasets.py --record bank   # store the sha256 of the download

Each file is extracted to ``<dest>/<name>.csv`` and its digest is compared
with the recorded one when present.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import sys
import urllib.request
import zipfile
from pathlib import Path

SOURCES = Path(__file__).resolve().parent.parent / "schemas" / "sources.json"


def _extract(blob: bytes, member: str) -> bytes:
    # members like "outer.zip/inner.csv" walk into nested archives
    head, _, rest = member.partition("/")
    with zipfile.ZipFile(io.BytesIO(blob)) as zf:
        name = next(n for n in zf.namelist() if n.endswith(head))
        data = zf.read(name)
    return _extract(data, rest) if rest else data


def fetch(name: str, entry: dict, dest: Path, record: bool) -> str:
    with urllib.request.urlopen(entry["url"]) as resp:
        blob = resp.read()
    digest = hashlib.sha256(blob).hexdigest()
    want = entry.get("sha256")
    if want and want != digest and not record:
        raise SystemExit(f"{name}: sha256 mismatch ({digest} != {want})")
    data = _extract(blob, entry["member"])
    out = dest / f"{name}.csv"
    if entry.get("convert") == "xls-to-csv":
        import pandas as pd

        pd.read_excel(io.BytesIO(data)).to_csv(out, index=False)
    else:
        out.write_bytes(data)
    print(f"{name}: {out} sha256={digest}")
    return digest


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("names", nargs="*", help="datasets to fetch (default: all)")
    ap.add_argument("--dest", default="data")
    ap.add_argument("--record", action="store_true", help="write digests back to sources.json")
    args = ap.parse_args(argv)
    sources = json.loads(SOURCES.read_text())
    dest = Path(args.dest)
    dest.mkdir(parents=True, exist_ok=True)
    for name in args.names or sources["datasets"]:
        entry = sources["datasets"][name]
        digest = fetch(name, entry, dest, args.record)
        if args.record:
            entry["sha256"] = digest
    if args.record:
        SOURCES.write_text(json.dumps(sources, indent=2) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
