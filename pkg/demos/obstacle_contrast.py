# obstacle_contrast.py
#
# Run the two-state plant past a disk obstacle twice: once with the barrier
# state appended to the learner, once without it. The run directories are
# written in the same layout as `bastion run`, then compared side by side.
#
# Usage: python demos/obstacle_contrast.py [--figure] [--out runs/contrast]
#   --figure  use the obstacle centred at (2, 2), where the unprotected run
#             actually cuts through the disk

import argparse
from pathlib import Path

from bastion.cli import compare, format_table, run

parser = argparse.ArgumentParser()
parser.add_argument("--figure", action="store_true")
parser.add_argument("--out", default="runs/contrast")
args = parser.parse_args()

suffix = "_figure" if args.figure else ""
root = Path(args.out)
presets = {"bas": f"case7_bas{suffix}.json", "nosafety": f"case7_nosafety{suffix}.json"}

for label, preset in presets.items():
    code, msg = run(preset, root / label)
    print(f"[{label}] exit {code}: {msg}")

report = compare(root / "bas", root / "nosafety")
print()
print(format_table(report))

# The barrier state turns safety into boundedness of an extra coordinate, so
# the protected run keeps h(x) > 0. Without it the learner only sees the
# quadratic cost and is free to go closer.
ns = report["b"]
if ns["incursions"]:
    print(f"\nunprotected run entered the obstacle {ns['incursions']} time(s)")
