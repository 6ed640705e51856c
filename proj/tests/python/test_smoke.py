import json
import math

import pytest

pairsem = pytest.importorskip("pairsem")


def test_text_helpers():
    assert pairsem.normalize_surface("  Atomic   Weight ") == "atomic weight"
    assert pairsem.tokenize("Atomic weight, 3-D") == ["atomic", "weight", "3", "d"]


def test_embedding_is_unit_and_deterministic():
    a, b = pairsem.embed(["atomic weight", "weight atomic"], dim=64)
    assert len(a) == 64
    assert math.isclose(sum(x * x for x in a), 1.0, rel_tol=1e-12)
    assert a == b


def test_parse_pairs_and_metrics():
    xml = "<pair><entity>Water</entity><aspect>boiling point</aspect></pair> junk"
    assert pairsem.parse_pair_xml(xml) == [("water", "boiling point")]
    assert pairsem.ndcg_at_k(["b", "a"], {"a"}, 10) == pytest.approx(1 / math.log2(3), abs=1e-12)
    assert pairsem.recall_at_k(["b", "a"], {"a", "c"}, 1) == 0.0


def test_fusion_and_distinctiveness():
    ranked = pairsem.fuse_and_rank(
        "q", [("a", 0.9, 0.1, -3.0), ("b", 0.8, 0.9, -1.0), ("c", 0.1, 0.5, -2.0)])
    assert [d for d, _ in ranked] == ["b", "a", "c"]
    assert ranked[0][1] == pytest.approx(5 / 6)
    # Equal fused scores fall back to the base similarity.
    tied = pairsem.fuse_and_rank("q", [("a", 0.9, 0.1, -3.0), ("b", 0.8, 0.9, -1.0)])
    assert [d for d, _ in tied] == ["a", "b"]
    assert pairsem.distinctiveness(0.0, [0.0] * 10) == pytest.approx(1 / 11)
    with pytest.raises(ValueError):
        pairsem.fuse_and_rank("q", [("a", float("nan"), 0.0, 0.0)])


def test_pipeline_round_trip(tmp_path):
    pairsem.synth(tmp_path, n_docs=12, n_entities=16, n_aspects=12, aspects_per_entity=3,
                  entities_per_doc={"min": 2, "max": 4}, entity_synonym_groups=2,
                  aspect_synonym_groups=2)
    reports = pairsem.run_pipeline(tmp_path, {"provider": {"dim": 32},
                                              "train": {"entity": {"epochs": 2},
                                                        "aspect": {"epochs": 2}},
                                              "inference": {"k": 10}})
    stages = [r["stage"] for r in reports]
    assert "train-entity" in stages and stages[-1] == "eval"
    assert (tmp_path / "run.tsv").exists()
    with pytest.raises(pairsem.DependencyError):
        pairsem.run_pipeline(tmp_path / "missing")
