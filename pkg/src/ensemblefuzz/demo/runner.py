"""Replay one input against a demo target and print its coverage.

Usage: runner.py TARGET INPUT. Prints ``edge count`` lines, plus a
``CRASH`` line with the innermost frames when the target raises; exits 0
after a normal run and 77 after a crash.
"""

import runpy
import sys
import traceback
from collections import Counter


def main(argv):
    if len(argv) != 3:
        print("usage: runner.py TARGET INPUT", file=sys.stderr)
        return 2
    module = runpy.run_path(argv[1])
    with open(argv[2], "rb") as fh:
        data = fh.read()
    hits = Counter()

    def hit(edge):
        hits[edge] += 1

    crashed = None
    try:
        module["run"](data, hit)
    except Exception as exc:  # the target crashing is the interesting case
        crashed = exc
    for edge in sorted(hits):
        print(edge, hits[edge])
    if crashed is None:
        return 0
    frames = traceback.extract_tb(crashed.__traceback__)[::-1]
    print("CRASH " + ";".join(f"{f.name} ({f.filename}:{f.lineno})" for f in frames))
    return 77


if __name__ == "__main__":
    sys.exit(main(sys.argv))
