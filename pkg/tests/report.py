"""Collects one verdict per acceptance criterion for the terminal summary."""

RESULTS = {}


def record(number, passed, detail):
    RESULTS[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
