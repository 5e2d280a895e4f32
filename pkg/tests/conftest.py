import pytest

from sbpsub.coupling import assemble_global_system
from sbpsub.topology import EmbeddedRegionSpec, StaggeredLayout, build_indicator_masks

ACCEPTANCE_LINES: dict = {}


def small_cavity(ratio=(1, 2), n=12, lo=4, hi=8, h=0.1, **kw):
    """PEC cavity of ``n x n`` cells with one embedded block ``[lo, hi]^2`` (in cells)."""
    lay = StaggeredLayout(n, n, h, h)
    regs = [EmbeddedRegionSpec((lo * h, hi * h, lo * h, hi * h), ratio)] if ratio else []
    masks = build_indicator_masks(lay, regs)
    return assemble_global_system(masks, **kw)


@pytest.fixture(scope="session")
def cavity_1_2():
    return small_cavity((1, 2))


@pytest.fixture(scope="session")
def cavity_2_3():
    return small_cavity((2, 3), n=14, lo=4, hi=10)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[1:])):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
