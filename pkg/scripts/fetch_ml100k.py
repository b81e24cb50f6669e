"""Fetch MovieLens-100k ``u.data`` into ``data/ml-100k/``.

By default the GroupLens archive is downloaded. Where that host is not
reachable, ``--from-wheel`` rebuilds the same file from the parquet copy
bundled in a ``pytorch_widedeep`` wheel (needs pandas and pyarrow)::

    pip download pytorch_widedeep==1.6.5 --no-deps -d /tmp/dl
    python scripts/fetch_ml100k.py --from-wheel /tmp/dl/pytorch_widedeep-1.6.5-py3-none-any.whl
"""

import argparse
import hashlib
import io
import urllib.request
import zipfile
from pathlib import Path

URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
MD5 = "6e47046882bad158b0efbb84cd5cb987"
WHEEL_MEMBER = "MovieLens100k_data.parquet.brotli"


def from_grouplens():
    with urllib.request.urlopen(URL, timeout=60) as resp:
        archive = zipfile.ZipFile(io.BytesIO(resp.read()))
    return archive.read("ml-100k/u.data")


def from_wheel(path):
    import pandas as pd

    with zipfile.ZipFile(path) as wheel:
        member = next(n for n in wheel.namelist() if n.endswith(WHEEL_MEMBER))
        df = pd.read_parquet(io.BytesIO(wheel.read(member)))
    cols = ["user_id", "movie_id", "rating", "timestamp"]
    lines = ("\t".join(str(v) for v in row) for row in df[cols].itertuples(index=False))
    return ("\n".join(lines) + "\n").encode()


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default=Path(__file__).resolve().parents[1] / "data" / "ml-100k" / "u.data", type=Path)
    p.add_argument("--from-wheel", type=Path)
    args = p.parse_args(argv)
    blob = from_wheel(args.from_wheel) if args.from_wheel else from_grouplens()
    digest = hashlib.md5(blob).hexdigest()
    if digest != MD5:
        print(f"warning: md5 {digest} differs from the file the tests were run on ({MD5})")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_bytes(blob)
    print(f"wrote {args.out} ({len(blob)} bytes, md5 {digest})")


if __name__ == "__main__":
    main()
