"""Collects the acceptance suite's per-criterion verdicts into the terminal summary."""

VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    by_id = {}
    for cid, label, ok, detail in VERDICTS:
        by_id.setdefault(cid, []).append((label, ok, detail))
    terminalreporter.section("acceptance criteria")
    for cid in sorted(by_id, key=lambda c: int(c[1:])):
        checks = by_id[cid]
        verdict = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        failed = "; ".join(f"{label}: {detail}" for label, ok, detail in checks if not ok)
        terminalreporter.write_line(f"{cid} {verdict}" + (f"  ({failed})" if failed else ""))
