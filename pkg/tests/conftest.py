import sys
from pathlib import Path

from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance criteria: criterion id -> list of (clause, passed, detail)
ACCEPTANCE: dict = {}


def record(cid: int, clause: str, passed: bool, detail: str = "") -> bool:
    ACCEPTANCE.setdefault(cid, []).append((clause, bool(passed), detail))
    print(f"[C{cid}] {clause}: {'PASS' if passed else 'FAIL'} {detail}")
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        clauses = ACCEPTANCE[cid]
        ok = all(p for _, p, _ in clauses)
        failed = [c for c, p, _ in clauses if not p]
        tail = f"  failing: {', '.join(failed)}" if failed else ""
        tr.write_line(f"C{cid:<2d} {'PASS' if ok else 'FAIL'}  ({len(clauses)} clauses){tail}")
        for clause, p, detail in clauses:
            tr.write_line(f"      {'ok  ' if p else 'FAIL'} {clause} {detail}")
