"""Acceptance suite: one test per criterion, each at desk scale.

Every test prints a single ``[PASS]``/``[FAIL]`` line with the gate's numbers,
so ``pytest -v tests/test_acceptance.py`` doubles as the results table.  The
module also runs as a script (``python3 tests/test_acceptance.py``) and exits
non-zero when any criterion fails.
"""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

from ddenoise.cli import main
from ddenoise.validation import GATES, GateResult, Scale, run_gate

pytestmark = pytest.mark.slow

SEED = 0
CRITERIA = list(GATES)


def _line(res: GateResult) -> str:
    detail = "; ".join(f"{label}: {d}" for label, ok, d in res.checks if not ok) or \
        "; ".join(f"{label}: {d}" for label, _, d in res.checks)
    return f"[{'PASS' if res.passed else 'FAIL'}] criterion {res.criterion:>2} {res.name}: {detail}"


def _cli_validate_bytes(out_dir: Path, threads: int) -> dict[str, bytes]:
    code = main(["validate", "--gate", "determinism", "--gate", "theory-mc-agreement",
                 "--scale", "quick", "--seed", str(SEED), "--threads", str(threads),
                 "--out-dir", str(out_dir)])
    assert code in (0, 1)
    return {p.name: p.read_bytes() for p in sorted(out_dir.iterdir())}


@pytest.mark.parametrize("name", CRITERIA)
def test_criterion(name, capsys, tmp_path):
    res = run_gate(name, Scale.desk(), seed=SEED, threads=1)
    if name == "determinism":
        # Whole-command check on top of the in-process gate: two validate runs
        # with different thread counts must write identical files.
        a = _cli_validate_bytes(tmp_path / "t1", 1)
        b = _cli_validate_bytes(tmp_path / "t3", 3)
        same = a == b and len(a) > 0
        res.add("validate CLI, threads 1 vs 3", same,
                f"{len(a)} files {'byte-identical' if same else 'differ'}")
        capsys.readouterr()
    with capsys.disabled():
        print("\n" + _line(res))
    assert res.passed, res.report()


def run_all() -> int:
    results = []
    for name in CRITERIA:
        res = run_gate(name, Scale.desk(), seed=SEED, threads=1)
        print(_line(res), flush=True)
        results.append(res.passed)
    print(f"{sum(results)}/{len(results)} criteria passed")
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(run_all())
