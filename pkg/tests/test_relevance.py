import random

import pytest

from vidtag.corpus import RetrievalSet
from vidtag.errors import InputError
from vidtag.relevance import (
    Neighborhood,
    RelevanceScore,
    VoteScheme,
    localize_video_tags,
    relevance_table,
    tag_relevance,
    vote,
)


def rs_with_counts(counts, total):
    return RetrievalSet((), frozenset(counts), dict(counts), total)


def nb_of(*tagsets, dists=None):
    dists = dists or [1.0] * len(tagsets)
    return Neighborhood("f", tuple((f"n{i}", d, frozenset(t)) for i, (t, d) in enumerate(zip(tagsets, dists))))


def test_vote_branches():
    assert vote("x", {"y"}, 1.0) == 0.0
    assert vote("x", {"x"}, 5.0, VoteScheme.BINARY) == 1.0
    assert vote("x", {"x"}, 2.0, VoteScheme.DISTANCE_WEIGHTED) == 0.25
    assert vote("x", {"y"}, 2.0, VoteScheme.DISTANCE_WEIGHTED) == 0.0
    assert vote("x", {"x"}, 0.0, VoteScheme.DISTANCE_WEIGHTED) == 1e12


def test_relevance_fixture():
    rs = rs_with_counts({"t": 10, "u": 50}, 100)
    nb = nb_of({"t"}, {"t", "u"}, {"t"}, {"u"})
    carriers = sum(1 for _, _, tags in nb.entries if "t" in tags)  # brute count
    assert carriers == 3
    assert tag_relevance("t", nb, rs).value == pytest.approx(3 / 4 - 0.1, abs=1e-15)


def test_relevance_absent_is_zero():
    rs = rs_with_counts({"t": 10, "u": 50}, 100)
    assert tag_relevance("t", nb_of({"u"}, {"u"}), rs) == RelevanceScore("t", 0.0)


def test_relevance_limit():
    nb = nb_of({"t"}, {"t"}, {"t"})
    for total in (10, 10**3, 10**6, 10**9):
        assert tag_relevance("t", nb, rs_with_counts({"t": 1}, total)).value == pytest.approx(1 - 1 / total)


def test_relevance_unknown_tag():
    with pytest.raises(InputError):
        tag_relevance("zzz", nb_of({"t"}), rs_with_counts({"t": 1}, 1))


def test_localize_keep_rule():
    rs = rs_with_counts({"a": 1, "b": 1, "c": 1}, 100)
    out = localize_video_tags(None, {"a", "b"}, nb_of({"a"}, {"c"}), rs)
    assert [s.tag for s in out if s.value > 0] == ["a"]
    assert {s.tag: s.value for s in out}["b"] == 0.0


def test_localize_ranking():
    rs = rs_with_counts({"a": 5, "b": 5}, 100)
    out = localize_video_tags(None, {"a", "b"}, nb_of({"a", "b"}, {"a"}, {"a"}, {"b"}), rs)
    assert [s.tag for s in out] == ["a", "b"]
    assert out[0].value == pytest.approx(3 / 4 - 0.05)


def test_localize_empty():
    rs = rs_with_counts({"a": 1}, 1)
    assert localize_video_tags(None, set(), nb_of({"a"}), rs) == []
    with pytest.raises(InputError):
        localize_video_tags(None, {"a"}, Neighborhood("f", ()), rs)


def test_tie_order_is_alphabetical():
    rs = rs_with_counts({"b": 1, "a": 1}, 10)
    out = localize_video_tags(None, {"b", "a"}, nb_of({"a", "b"}), rs)
    assert [s.tag for s in out] == ["a", "b"]


def _random_case(rnd):
    vocab = [f"t{i}" for i in range(8)]
    total = rnd.randint(1, 200)
    counts = {t: rnd.randint(1, total) for t in vocab}
    K = rnd.randint(1, 20)
    tagsets = [set(rnd.sample(vocab, rnd.randint(1, 4))) for _ in range(K)]
    dists = [rnd.choice([0.0, rnd.uniform(0, 3)]) for _ in range(K)]
    return rs_with_counts(counts, total), nb_of(*tagsets, dists=dists), vocab


def test_binary_bounds_and_counting_oracle():
    rnd = random.Random(2)
    for _ in range(150):
        rs, nb, vocab = _random_case(rnd)
        for t in vocab:
            v = tag_relevance(t, nb, rs).value
            count = sum(1 for _, _, tags in nb.entries if t in tags)
            prior = rs.tag_counts[t] / rs.total
            assert -prior <= v <= 1
            if count:
                assert v + prior == pytest.approx(count / nb.K, abs=1e-12)
            else:
                assert v == 0.0


def test_table_matches_single_tag():
    rnd = random.Random(3)
    for _ in range(100):
        rs, nb, vocab = _random_case(rnd)
        for scheme in VoteScheme:
            table = relevance_table(nb, rs, scheme)
            for t in vocab:
                assert table.get(t, 0.0) == tag_relevance(t, nb, rs, scheme).value


def test_unit_distances_equal_binary():
    rnd = random.Random(4)
    for _ in range(100):
        rs, nb, vocab = _random_case(rnd)
        nb1 = Neighborhood("f", tuple((i, 1.0, tags) for i, _, tags in nb.entries))
        for t in vocab:
            assert tag_relevance(t, nb1, rs, "distance_weighted").value == tag_relevance(t, nb1, rs, "binary").value


def test_monotone_in_carriers():
    rs = rs_with_counts({"t": 3, "u": 3}, 10)
    base = [{"t"}, {"u"}, {"u"}]
    prev = None
    for extra in range(4):
        tagsets = base + [{"t"}] * extra
        nb = nb_of(*tagsets)
        v = tag_relevance("t", nb, rs).value + rs.prior("t")
        count = sum(1 for s in tagsets if "t" in s)
        assert v == pytest.approx(count / len(tagsets))
    # K held fixed: replacing a non-carrier by a carrier strictly raises the vote rate
    for swaps in range(3):
        tagsets = [{"t"}] * (1 + swaps) + [{"u"}] * (2 - swaps)
        v = tag_relevance("t", nb_of(*tagsets), rs).value
        if prev is not None:
            assert v > prev
        prev = v


def test_tag_union():
    nb = nb_of({"a", "b"}, {"c"}, set())
    assert nb.tag_union == {"a", "b", "c"}
