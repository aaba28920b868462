import hypothesis
import numpy as np
import pytest
from hypothesis import strategies as st

from layoutfix.core import BBox, CriteriaSet, Element, Layout

hypothesis.settings.register_profile(
    "suite", max_examples=60, deadline=None, derandomize=True
)
hypothesis.settings.load_profile("suite")


# boxes comfortably inside the unit canvas, sizes bounded away from zero
boxes = st.builds(
    BBox,
    x=st.floats(0.15, 0.85),
    y=st.floats(0.15, 0.85),
    w=st.floats(0.02, 0.3),
    h=st.floats(0.02, 0.3),
)

categories = st.sampled_from(["text", "title", "figure", "image", "caption"])


@st.composite
def layouts(draw, min_elements=1, max_elements=6):
    n = draw(st.integers(min_elements, max_elements))
    elements = tuple(
        Element(f"e{i}", draw(categories), draw(boxes)) for i in range(n)
    )
    return Layout(600.0, 800.0, elements)


@pytest.fixture
def document_criteria():
    return CriteriaSet(
        others=frozenset({"text", "title", "list", "table", "figure"})
    )


@pytest.fixture
def magazine_criteria():
    return CriteriaSet(
        parent=frozenset({"image"}),
        child=frozenset({"text-over-image", "headline-over-image"}),
        others=frozenset({"text", "headline"}),
    )


@pytest.fixture
def mixed_criteria():
    return CriteriaSet(
        parent=frozenset({"image"}),
        child=frozenset({"caption"}),
        others=frozenset({"text", "title", "figure"}),
        preserve_aspect=frozenset({"image"}),
        preserve_size=frozenset({"text"}),
    )
