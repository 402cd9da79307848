#!/usr/bin/env python3
"""Export the photographic sample images bundled with scikit-image as PNGs.

Gives the super-resolution pipeline a small corpus of real photographs when no
external dataset is available. Usage:

    python3 tools/make_sr_corpus.py data/sr_corpus
"""
import sys
from pathlib import Path

import numpy as np
from PIL import Image
import skimage.data as d

# last three are kept aside as the held-out evaluation images
TRAIN = ["astronaut", "brick", "grass", "gravel", "rocket", "moon", "text"]
HELD_OUT = ["camera", "coffee", "chelsea"]


def save(name: str, out_dir: Path) -> None:
    img = getattr(d, name)()
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        arr = np.clip(arr, 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(out_dir / f"{name}.png")


def main() -> int:
    if len(sys.argv) != 2:
        print(__doc__)
        return 2
    root = Path(sys.argv[1])
    (root / "train").mkdir(parents=True, exist_ok=True)
    (root / "eval").mkdir(parents=True, exist_ok=True)
    for name in TRAIN:
        save(name, root / "train")
    for name in HELD_OUT:
        save(name, root / "eval")
    print(f"wrote {len(TRAIN)} training and {len(HELD_OUT)} held-out images under {root}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
