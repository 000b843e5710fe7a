"""Rebuild or verify the vendored benchmark datasets.

    python3 scripts/fetch_datasets.py --check
    python3 scripts/fetch_datasets.py --pima [--wheel rdatasets-0.2.10-py3-none-any.whl]

Pima is rebuilt from the MASS ``Pima.tr`` and ``Pima.te`` tables (training
rows first) shipped in the ``rdatasets`` wheel; the wheel is downloaded
with pip unless given. Reading the bundled tables needs pandas, which the
package itself does not depend on. The Radiata pine table (42 trees:
maximum compression strength ``y``, density ``x``, resin-adjusted density
``z``) is a classic small dataset kept as-is and only checksum-verified.
"""

import argparse
import hashlib
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "src" / "learnt_harmonic" / "benchmarks" / "data"
SHA256 = {
    "pima.csv": "751f04c6da2b8bcaa966779a12015c709fdbd099d4153982501693ed882a3a63",
    "radiata.csv": "9489881d2e44201183a62020b6d3ecbe55e8958cb6910b3e9eaf1d54dc0b1207",
}
PIMA_RENAME = {"npreg": "NP", "glu": "PGC", "bp": "BP", "skin": "TST", "bmi": "BMI", "ped": "DP", "age": "AGE"}


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def pima_csv(wheel: Path) -> str:
    import pandas as pd

    frames = []
    with zipfile.ZipFile(wheel) as zf:
        for part in ("Pima.tr", "Pima.te"):
            raw = zf.read(f"rdatasets/_data/MASS/{part}.pkl.compress")
            frames.append(pd.read_pickle(io.BytesIO(raw), compression="xz"))
    df = pd.concat(frames, ignore_index=True)
    out = df[list(PIMA_RENAME)].rename(columns=PIMA_RENAME)
    out["outcome"] = (df["type"] == "Yes").astype(int)
    return out.to_csv(index=False, lineterminator="\n")


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--check", action="store_true", help="verify checksums of the vendored files")
    p.add_argument("--pima", action="store_true", help="rebuild pima.csv")
    p.add_argument("--wheel", type=Path, help="local rdatasets wheel (skips the download)")
    args = p.parse_args(argv)
    status = 0
    if args.pima:
        wheel = args.wheel
        if wheel is None:
            tmp = Path(tempfile.mkdtemp())
            subprocess.run(
                [sys.executable, "-m", "pip", "download", "rdatasets==0.2.10", "--no-deps", "-d", str(tmp)], check=True
            )
            wheel = next(tmp.glob("rdatasets-*.whl"))
        (DATA / "pima.csv").write_text(pima_csv(wheel))
        print(f"wrote {DATA / 'pima.csv'}")
    if args.check or not args.pima:
        for name, expected in SHA256.items():
            digest = sha256(DATA / name)
            ok = digest == expected
            status |= not ok
            print(f"{name}: {digest} {'ok' if ok else 'MISMATCH'}")
    return status


if __name__ == "__main__":
    sys.exit(main())
