import numpy as np
import pytest

from locfree.netgen import (AnchorRegion, DeploymentSpec, NetworkInstance, Point2D, Segment,
                            build_unit_disk_graph, generate_network)


def make_instance(positions, radius, anchors=(), name="test") -> NetworkInstance:
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    return NetworkInstance(pos, np.array(sorted(anchors), dtype=np.int64), float(radius),
                           build_unit_disk_graph(pos, radius), 0, name)


def grid_instance(nx, ny, spacing=1.0, radius=1.5, anchors=()) -> NetworkInstance:
    xs, ys = np.meshgrid(np.arange(nx) * spacing, np.arange(ny) * spacing)
    return make_instance(np.column_stack([xs.ravel(), ys.ravel()]), radius, anchors)


def h_layout(seed=1, density=0.2):
    """Two vertical streets joined by one horizontal street: two T-crossings plus end stubs."""
    return DeploymentSpec(
        segments=(
            Segment((Point2D(-60.0, 0.0), Point2D(160.0, 0.0)), 20.0, density),
            Segment((Point2D(0.0, -60.0), Point2D(0.0, 60.0)), 20.0, density),
            Segment((Point2D(100.0, -60.0), Point2D(100.0, 60.0)), 20.0, density),
        ),
        anchor_regions=(),
        comm_radius=10.0,
        seed=seed,
        name="h",
    )


def small_street(seed=1, anchors=30):
    """A short L-shaped street with anchors along one end; quick to localize."""
    return DeploymentSpec(
        segments=(Segment((Point2D(0.0, 0.0), Point2D(60.0, 0.0), Point2D(60.0, 40.0)), 15.0, 0.2),),
        anchor_regions=(AnchorRegion((-10.0, -10.0, 15.0, 10.0), anchors),),
        comm_radius=10.0,
        seed=seed,
        name="small",
    )


@pytest.fixture(scope="session")
def small_instance():
    return generate_network(small_street(3))


# acceptance verdicts, one line per criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
