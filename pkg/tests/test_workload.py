"""Workload generator: operation mix, access distributions, mutation,
question generation, stream assembly."""

from __future__ import annotations

import random

import pytest

from ragbench.errors import (
    EmptyPopulation,
    EmptyQuestionPool,
    ExhaustedCorpus,
    InvalidMix,
    NoMutableToken,
)
from ragbench.pipeline.model import Chunk
from ragbench.workload import (
    KIND_INSERT,
    KIND_QUERY,
    KIND_REMOVAL,
    KIND_UPDATE,
    AccessDistribution,
    AccessSampler,
    ArrivalSpec,
    OperationMix,
    WorkloadGenerator,
    WorkloadSpec,
    generate_question,
    generate_workload,
    mutate_chunk,
    sample_operation,
    sample_target,
    seed_question,
)

from conftest import make_manifest


def _chunk(text: str, file_id: str = "f", ordinal: int = 0, version: int = 0) -> Chunk:
    return Chunk(
        chunk_id=f"{file_id}#{ordinal}v{version}",
        file_id=file_id,
        start=0,
        end=len(text.encode()),
        text=text,
        version=version,
        ordinal=ordinal,
    )


# --- sample_operation ---------------------------------------------------------

def test_degenerate_mix_always_query():
    mix = OperationMix(p_query=1.0)
    rng = random.Random(123)
    assert all(sample_operation(rng, mix) == KIND_QUERY for _ in range(1000))


def test_mix_frequencies_within_binomial_bound():
    # n=1e5, p=0.9: the +-600 envelope is ~6 sigma of Binomial(n, p)
    mix = OperationMix(p_query=0.9, p_update=0.1)
    rng = random.Random(42)
    queries = sum(sample_operation(rng, mix) == KIND_QUERY for _ in range(100_000))
    assert abs(queries - 90_000) <= 600


def test_invalid_mix_rejected():
    with pytest.raises(InvalidMix):
        OperationMix(p_query=0.5, p_insert=0.6).validate()
    with pytest.raises(InvalidMix):
        sample_operation(random.Random(0), OperationMix(p_query=0.5, p_insert=0.6))
    with pytest.raises(InvalidMix):
        OperationMix(p_query=1.2, p_insert=-0.2).validate()


# --- sample_target --------------------------------------------------------------

def test_uniform_singleton():
    access = AccessDistribution(kind="uniform")
    assert sample_target(random.Random(0), access, ["f1"]) == "f1"


def test_empty_population():
    with pytest.raises(EmptyPopulation):
        sample_target(random.Random(0), AccessDistribution(), [])


def test_zipfian_two_ranks_analytic():
    # rank-1 probability = 1 / (1 + 1/2) = 2/3; 1e6 draws, ~4 sigma tolerance
    access = AccessDistribution(kind="zipfian", exponent=1.0, rank_permutation_seed=9)
    sampler = AccessSampler(access, ["a", "b"])
    rank1_id = sampler._ranked[0]
    rng = random.Random(7)
    n = 1_000_000
    hits = sum(sampler.sample(rng) == rank1_id for _ in range(n))
    assert abs(hits / n - 2.0 / 3.0) < 0.002


def test_zipfian_exponent_zero_is_uniform():
    access = AccessDistribution(kind="zipfian", exponent=0.0, rank_permutation_seed=3)
    sampler = AccessSampler(access, [f"f{i}" for i in range(8)])
    rng = random.Random(5)
    counts = {}
    n = 80_000
    for _ in range(n):
        fid = sampler.sample(rng)
        counts[fid] = counts.get(fid, 0) + 1
    for fid, c in counts.items():
        assert abs(c / n - 1 / 8) < 0.01, (fid, c)


def test_zipfian_permutation_stable_for_seed():
    access = AccessDistribution(kind="zipfian", exponent=1.0, rank_permutation_seed=11)
    pop = [f"f{i}" for i in range(20)]
    s1 = AccessSampler(access, pop)
    s2 = AccessSampler(access, pop)
    assert s1._ranked == s2._ranked
    s3 = AccessSampler(
        AccessDistribution(kind="zipfian", exponent=1.0, rank_permutation_seed=12), pop
    )
    assert s1._ranked != s3._ranked


# --- mutate_chunk ----------------------------------------------------------------

def test_mutation_replaces_first_numeric_token():
    chunk = _chunk("The bridge was built in 1937.")
    result = mutate_chunk(chunk, random.Random(7))
    # independent span oracle: position of the numeric token in the byte string
    expected_start = chunk.text.encode().find(b"1937")
    assert result.replaced_span == (expected_start, expected_start + 4)
    assert result.original_token == "1937"
    # independent replacement oracle: same documented recipe, fresh rng
    oracle_rng = random.Random(7)
    expected = "".join(oracle_rng.choice("0123456789") for _ in range(4))
    assert expected != "1937"
    assert result.replacement_token == expected
    assert len(result.replacement_token) == 4
    assert result.replacement_token.isdigit()
    assert result.mutated_text == f"The bridge was built in {result.replacement_token}."


def test_mutation_differs_only_in_span():
    chunk = _chunk("reactor042 started in 1971. coil042 outputs 512 units.")
    result = mutate_chunk(chunk, random.Random(3))
    s, e = result.char_span
    assert chunk.text[:s] == result.mutated_text[:s]
    assert chunk.text[e:] == result.mutated_text[s + len(result.replacement_token):]
    assert result.replacement_token != result.original_token


def test_mutation_deterministic():
    chunk = _chunk("The dam opened in 1955.")
    a = mutate_chunk(chunk, random.Random(21))
    b = mutate_chunk(chunk, random.Random(21))
    assert a == b


def test_mutation_prefers_numeric_then_capitalized():
    numeric = mutate_chunk(_chunk("Lake Anna holds 3200 acres."), random.Random(0))
    assert numeric.original_token == "3200"
    # no numerics: longest capitalized non-sentence-initial token
    noun = mutate_chunk(_chunk("The Grandville span crosses the Missouri river."), random.Random(0))
    assert noun.original_token == "Grandville"


def test_digits_inside_words_are_not_numeric_tokens():
    result = mutate_chunk(_chunk("The Avalanche00 crossing is long."), random.Random(0))
    assert result.original_token == "Avalanche00"


def test_no_mutable_token():
    with pytest.raises(NoMutableToken):
        mutate_chunk(_chunk("the and of it"), random.Random(0))


# --- generate_question -------------------------------------------------------------

def test_question_template_and_answer():
    chunk = _chunk("The bridge was built in 1937.")
    result = mutate_chunk(chunk, random.Random(7))
    qa = generate_question(result, chunk)
    assert qa.question == "Fill in the blank: The bridge was built in ____."
    assert qa.expected_answer == result.replacement_token
    assert qa.question.count("____") == 1
    assert qa.version == 1
    assert qa.target_chunk_id == "f#0v1"


def test_question_sentence_isolation():
    chunk = _chunk("alpha beta gamma delta. The year 1903 mattered. omega closes.")
    result = mutate_chunk(chunk, random.Random(5))
    qa = generate_question(result, chunk)
    assert qa.question == "Fill in the blank: The year ____ mattered."


def test_question_versions_increment():
    chunk = _chunk("built in 1937.")
    m1 = mutate_chunk(chunk, random.Random(1))
    qa1 = generate_question(m1, chunk)
    chunk_v1 = _chunk(m1.mutated_text, version=1)
    m2 = mutate_chunk(chunk_v1, random.Random(2))
    qa2 = generate_question(m2, chunk_v1)
    assert (qa1.version, qa2.version) == (1, 2)


def test_seed_question_uses_original_token():
    qa = seed_question(_chunk("The tunnel opened in 1927."))
    assert qa.expected_answer == "1927"
    assert qa.version == 0
    assert "____" in qa.question
    assert seed_question(_chunk("the and of it")) is None


# --- build_request / generate_workload ------------------------------------------

def _spec(**kwargs) -> WorkloadSpec:
    defaults = dict(
        mix=OperationMix(p_query=1.0),
        access=AccessDistribution(kind="uniform"),
        arrival=ArrivalSpec(kind="closed", concurrency=1),
        total_requests=20,
        seed=5,
    )
    defaults.update(kwargs)
    return WorkloadSpec(**defaults)


def _generator(n_docs=10, initial=None, **spec_kwargs):
    from ragbench.pipeline.chunking import Chunker
    from ragbench.pipeline.model import ChunkingSpec

    manifest = make_manifest(n_docs, initial=initial)
    chunker = Chunker(ChunkingSpec(mode="fixed", size=4096))
    return WorkloadGenerator(_spec(**spec_kwargs), manifest, chunker)


def test_build_request_removal_passthrough():
    gen = _generator()
    req = gen.build_request(KIND_REMOVAL)
    assert req.kind == KIND_REMOVAL
    assert req.payload is None
    assert req.target_file_id in {f"d{i:03d}" for i in range(10)}


def test_build_request_update_grows_pool():
    gen = _generator()
    before = len(gen.question_pool)
    req = gen.build_request(KIND_UPDATE)
    assert len(gen.question_pool) == before + 1
    assert req.qa is not None
    assert req.qa.expected_answer in req.payload
    assert req.update_new_chunk.text == req.payload


def test_build_request_query_empty_pool_error():
    # corpus with no mutable tokens -> no seed questions
    from ragbench.corpus import CorpusManifest
    from ragbench.pipeline.chunking import Chunker
    from ragbench.pipeline.model import ChunkingSpec, Document

    docs = [Document("a", "a", b"the and of it"), Document("b", "b", b"so to be or")]
    manifest = CorpusManifest(documents=docs, initial_count=2)
    gen = WorkloadGenerator(_spec(), manifest, Chunker(ChunkingSpec(mode="fixed", size=4096)))
    with pytest.raises(EmptyQuestionPool):
        gen.build_request(KIND_QUERY)


def test_insert_exhaustion_errors():
    gen = _generator(n_docs=5, initial=4)
    gen.build_request(KIND_INSERT)  # consumes the single reserve doc
    with pytest.raises(ExhaustedCorpus):
        gen.build_request(KIND_INSERT)


def test_stream_regeneration_identical():
    spec = _spec(mix=OperationMix(p_query=0.5, p_insert=0.1, p_update=0.3, p_removal=0.1),
                 total_requests=60)
    from ragbench.pipeline.chunking import Chunker
    from ragbench.pipeline.model import ChunkingSpec

    chunker = Chunker(ChunkingSpec(mode="fixed", size=4096))
    a = generate_workload(spec, make_manifest(30, initial=20), chunker)
    b = generate_workload(spec, make_manifest(30, initial=20), chunker)
    assert a == b


def test_no_operation_targets_removed_file():
    spec = _spec(mix=OperationMix(p_query=0.35, p_update=0.5, p_removal=0.15),
                 total_requests=100, seed=13)
    from ragbench.pipeline.chunking import Chunker
    from ragbench.pipeline.model import ChunkingSpec

    chunker = Chunker(ChunkingSpec(mode="fixed", size=4096))
    stream = generate_workload(spec, make_manifest(40), chunker)
    removed = set()
    for req in stream:
        if req.kind in (KIND_UPDATE, KIND_REMOVAL):
            assert req.target_file_id not in removed, req
        if req.kind == KIND_REMOVAL:
            removed.add(req.target_file_id)


def test_update_questions_become_eligible_and_preferred():
    spec = _spec(mix=OperationMix(p_query=0.5, p_update=0.5), total_requests=200, seed=2)
    from ragbench.pipeline.chunking import Chunker
    from ragbench.pipeline.model import ChunkingSpec

    chunker = Chunker(ChunkingSpec(mode="fixed", size=4096))
    stream = generate_workload(spec, make_manifest(6), chunker)
    latest: dict[str, object] = {}
    used_updated = 0
    for req in stream:
        if req.kind == KIND_UPDATE:
            latest[req.target_file_id] = req.qa
        elif req.kind == KIND_QUERY and req.target_file_id in latest:
            assert req.qa == latest[req.target_file_id], "query must use the latest version"
            used_updated += 1
    assert used_updated > 0


# --- arrival processes --------------------------------------------------------------

def test_open_loop_fixed_spacing():
    spec = _spec(arrival=ArrivalSpec(kind="open_fixed", rate=10.0), total_requests=10)
    from ragbench.pipeline.chunking import Chunker
    from ragbench.pipeline.model import ChunkingSpec

    stream = generate_workload(spec, make_manifest(5), Chunker(ChunkingSpec(mode="fixed", size=4096)))
    assert [round(r.scheduled_at, 6) for r in stream] == [round(i / 10.0, 6) for i in range(10)]


def test_closed_loop_has_no_schedule():
    gen = _generator()
    reqs = list(gen.requests())
    assert all(r.scheduled_at is None for r in reqs)
    assert [r.sequence_no for r in reqs] == list(range(len(reqs)))


def test_poisson_mean_interarrival():
    spec = _spec(arrival=ArrivalSpec(kind="open_poisson", rate=100.0), total_requests=100_000,
                 seed=77)
    from ragbench.pipeline.chunking import Chunker
    from ragbench.pipeline.model import ChunkingSpec

    gen = WorkloadGenerator(spec, make_manifest(5), Chunker(ChunkingSpec(mode="fixed", size=4096)))
    times = [r.scheduled_at for r in gen.requests()]
    gaps = [b - a for a, b in zip(times, times[1:])]
    mean_ms = sum(gaps) / len(gaps) * 1000.0
    assert abs(mean_ms - 10.0) < 0.2


def test_trace_record_shape():
    gen = _generator()
    req = gen.build_request(KIND_QUERY)
    rec = req.trace_record()
    assert set(rec) == {"sequence_no", "kind", "target", "scheduled_at_ms"}
    assert rec["scheduled_at_ms"] is None
