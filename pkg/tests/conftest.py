import numpy as np
import pytest

from vidtag.corpus import Source, TaggedImage, build_retrieval_set


def make_image(id, tags, vec=(0.0, 0.0), source=Source.FLICKR, query=None):
    tags = frozenset(tags)
    if source in (Source.GOOGLE, Source.BING):
        query = query or next(iter(tags))
    return TaggedImage(id, source, tags, np.asarray(vec, dtype=np.float32), query)


@pytest.fixture
def toy_images():
    return [
        make_image("a", {"beach", "sand"}, (0.0, 0.0)),
        make_image("b", {"beach", "sea"}, (1.0, 0.0)),
        make_image("c", {"beach"}, (0.0, 1.0)),
        make_image("d", {"forest", "trees"}, (5.0, 5.0)),
        make_image("e", {"forest"}, (6.0, 5.0)),
    ]


@pytest.fixture
def toy_rs(toy_images):
    return build_retrieval_set(toy_images, {"beach", "forest"})


# verdict lines appended by the acceptance tests
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
