"""Write the bundled digit images out as an IDX image/label file pair.

The files are plain (unzipped) IDX, directly consumable by the prep and
eval subcommands and by pipeline.load_idx.
"""
import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from bispectral import pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default=".", help="where to put the two files")
    args = ap.parse_args()

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = pipeline.make_demo_digits()
    images_path = out / "digits-images.idx"
    labels_path = out / "digits-labels.idx"
    pipeline.write_idx(data.images, data.labels, images_path, labels_path)
    print("wrote %d images to %s / %s" % (len(data.images), images_path, labels_path))


if __name__ == "__main__":
    main()
