"""Collects one line per acceptance criterion for the terminal summary."""

LINES = []


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    LINES.append(line)
    print(line)
    return ok
