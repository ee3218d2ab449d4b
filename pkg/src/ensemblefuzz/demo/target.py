"""Toy parser used by the process-mode demo.

The runner calls ``run(data, hit)``; ``hit(edge_id)`` records one edge
traversal. Input ``FUZZ!`` reaches the crash.
"""


def run(data, hit):
    hit(1)
    if data:
        parse_header(data, hit)


def parse_header(data, hit):
    hit(10)
    if data[:1] != b"F":
        hit(11)
        return
    hit(12)
    if data[1:2] == b"U":
        hit(13)
        parse_body(data[2:], hit)


def parse_body(data, hit):
    hit(20)
    for _ in data:
        hit(21)
    if data[:1] == b"Z":
        hit(22)
        if data[1:2] == b"Z":
            hit(23)
            check_magic(data[2:], hit)


def check_magic(data, hit):
    hit(30)
    if data[:1] == b"!":
        hit(31)
        boom(data)


def boom(data):
    raise RuntimeError(f"bad magic trailer {data!r}")
