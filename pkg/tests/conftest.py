"""Shared fixtures: a 10-file repository with hand-enumerable graph counts."""

from __future__ import annotations

import textwrap
from pathlib import Path

import pytest

from graphcomplete.embedder import DeterministicBackend
from graphcomplete.graph_builder import build_graph
from graphcomplete.index import build_indexes

FIXTURE_FILES: dict[str, str] = {
    "models.py": """\
        from abc import ABC, abstractmethod

        Number = int | float


        class Shape(ABC):
            @abstractmethod
            def area(self):
                pass

            def describe(self):
                return self.name()

            def name(self):
                return "shape"
        """,
    "shapes.py": """\
        from models import Shape


        class Circle(Shape):
            def __init__(self, radius):
                self.radius = radius

            def area(self):
                return 3.14 * self.radius * self.radius


        class Square(Shape):
            def __init__(self, side):
                self.side = side

            def area(self):
                return self.side * self.side
        """,
    "util.py": """\
        def clamp(value, low, high):
            if value < low:
                return low
            if value > high:
                return high
            return value


        def retry(action):
            for attempt in range(3):
                result = action()
                if result:
                    return result
            return None
        """,
    "app.py": """\
        import util
        from services.report import build_report


        def main(radius: float) -> dict:
            report = build_report(radius)
            return report
        """,
    "geometry/__init__.py": """\
        from .area import circle_area
        """,
    "geometry/area.py": """\
        from models import Number
        from shapes import Circle


        def circle_area(radius: Number) -> Number:
            shape: Circle = Circle(radius)
            return shape.area()
        """,
    "geometry/perimeter.py": """\
        from shapes import Square


        def square_perimeter(side):
            shape = Square(side)
            return 4 * shape.side
        """,
    "services/__init__.py": "",
    "services/report.py": """\
        import util
        from geometry.area import circle_area

        RADIUS_LIMIT = 10.0


        def build_report(radius):
            area = circle_area(radius)
            capped = util.clamp(area, 0, RADIUS_LIMIT)
            return {"area": area, "capped": capped}
        """,
    "data/constants.py": """\
        from models import Number

        Scale = Number
        Limits = dict[str, Number]
        """,
}


def write_fixture_repo(root: Path) -> Path:
    for rel, content in FIXTURE_FILES.items():
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(textwrap.dedent(content), encoding="utf-8")
    return root


@pytest.fixture(scope="session")
def fixture_repo(tmp_path_factory) -> Path:
    return write_fixture_repo(tmp_path_factory.mktemp("fixrepo"))


@pytest.fixture(scope="session")
def fixture_build(fixture_repo):
    return build_graph(fixture_repo)


@pytest.fixture(scope="session")
def fixture_graph(fixture_build):
    return fixture_build.graph


@pytest.fixture(scope="session")
def backend():
    return DeterministicBackend(dim=128)


@pytest.fixture(scope="session")
def fixture_bundle(fixture_graph, backend):
    return build_indexes(fixture_graph, backend, pe_dim=8)
