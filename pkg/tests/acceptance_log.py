"""Collects one summary line per acceptance criterion for the terminal report."""
LINES = []


def record(label, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}"
    LINES.append(line)
    print(line)
    return passed
