import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dcsim.model import PowerModel
from dcsim.placement import Cluster


def build_cluster(host_mips, vms, placement, host_ram=32768, active=None):
    """``vms`` is a list of (demand_mips, ram_mb); ``placement`` maps VM -> host."""
    ram = [host_ram] * len(host_mips) if np.isscalar(host_ram) else host_ram
    c = Cluster(host_mips, ram, [r for _, r in vms], PowerModel.linear())
    c.vm_demand = np.array([d for d, _ in vms], dtype=float)
    for vm, host in enumerate(placement):
        if host is not None:
            c.assign(vm, host)
    c.active[:] = False
    for h, residents in enumerate(c.residents):
        c.active[h] = bool(residents)
    if active is not None:
        c.active[list(active)] = True
    return c


@pytest.fixture
def make_cluster():
    return build_cluster


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def record_acceptance(number, ok, detail):
    line = f"ACCEPTANCE {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
