"""Generator tests: determinism, planted structure, power-law clicks, round trips."""

import io
from collections import Counter

import pytest

from coclick.base import ConfigError
from coclick.dataset import load_dataset
from coclick.logs import ParseStats, parse_log, read_metadata, write_events, write_metadata
from coclick.synth import SynthConfig, generate_corpus, generate_sessions
from coclick.text import word_tokenize


def small_config(**overrides):
    fields = dict(n_articles=60, cluster_size=4, sessions=2000, rng_seed=5)
    fields.update(overrides)
    return SynthConfig(**fields)


class TestGenerateCorpus:
    def test_deterministic_per_seed(self):
        a = generate_corpus(small_config())
        b = generate_corpus(small_config())
        assert a.articles == b.articles
        assert a.topics == b.topics

    def test_different_seed_differs(self):
        a = generate_corpus(small_config())
        b = generate_corpus(small_config(rng_seed=6))
        assert a.articles != b.articles

    def test_same_cluster_articles_share_two_topics(self):
        corpus = generate_corpus(small_config())
        by_cluster = {}
        for aid, cluster in corpus.cluster_of.items():
            by_cluster.setdefault(cluster, []).append(aid)
        for members in by_cluster.values():
            for i, a in enumerate(members):
                for b in members[i + 1 :]:
                    shared = set(corpus.topics[a]) & set(corpus.topics[b])
                    assert len(shared) >= 2

    def test_topics_per_article_within_two_to_four(self):
        corpus = generate_corpus(small_config(topics_per_cluster=4))
        for topics in corpus.topics.values():
            assert 2 <= len(topics) <= 4

    def test_titles_respect_length_bounds(self):
        config = small_config(title_len=(8, 14, 10))
        corpus = generate_corpus(config)
        for article in corpus.articles:
            n = len(word_tokenize(article.title))
            assert 8 <= n <= 14

    def test_core_topics_in_title_and_abstract(self):
        corpus = generate_corpus(small_config())
        for article in corpus.articles:
            core = corpus.topics[article.article_id][:2]
            abstract_tokens = {t.lower for t in word_tokenize(article.abstract)}
            for topic in core:
                assert topic in corpus.title_tokens[article.article_id]
                assert topic in abstract_tokens

    def test_every_topic_in_abstract(self):
        corpus = generate_corpus(small_config())
        for article in corpus.articles:
            abstract_tokens = {t.lower for t in word_tokenize(article.abstract)}
            assert set(corpus.topics[article.article_id]) <= abstract_tokens

    def test_planted_gold_contains_cluster_core(self):
        corpus = generate_corpus(small_config())
        ids = [a.article_id for a in corpus.articles]
        a, b = ids[0], ids[1]
        assert corpus.cluster_of[a] == corpus.cluster_of[b]
        assert len(corpus.planted_gold(a, b)) >= 2

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            generate_corpus(small_config(title_len=(5, 12, 9)))
        with pytest.raises(ConfigError):
            generate_corpus(small_config(article_zipf=0.9))
        with pytest.raises(ConfigError):
            generate_corpus(small_config(topics_per_cluster=1))


class TestGenerateSessions:
    def test_deterministic_per_seed(self):
        corpus = generate_corpus(small_config())
        a = generate_sessions(corpus, small_config())
        b = generate_sessions(corpus, small_config())
        assert a == b

    def test_query_tokens_come_from_target_topics(self):
        config = small_config()
        corpus = generate_corpus(config)
        events = generate_sessions(corpus, config)
        by_session = {}
        for e in events:
            by_session.setdefault(e.session_id, []).append(e)
        for clicks in by_session.values():
            target = min(clicks, key=lambda e: e.rank)
            assert target.rank == 1
            topics = set(corpus.topics[target.article_id])
            for qtok in clicks[0].query.split():
                assert qtok in topics
            assert 1 <= len(clicks[0].query.split()) <= 4

    def test_sessions_click_one_to_three_results(self):
        config = small_config()
        corpus = generate_corpus(config)
        events = generate_sessions(corpus, config)
        sizes = Counter(e.session_id for e in events)
        assert set(sizes.values()) <= {1, 2, 3}

    def test_popular_articles_dominate_long_tail(self):
        config = small_config(n_articles=100, sessions=10000, article_zipf=1.1)
        corpus = generate_corpus(config)
        events = generate_sessions(corpus, config)
        clicks = Counter(e.article_id for e in events if e.rank == 1)
        top = clicks[corpus.articles[0].article_id]
        tail = [clicks.get(a.article_id, 0) for a in corpus.articles[50:]]
        assert top >= 10 * (sum(tail) / len(tail))

    def test_click_histogram_monotone_over_rank_deciles(self):
        config = small_config(n_articles=100, sessions=10000)
        corpus = generate_corpus(config)
        events = generate_sessions(corpus, config)
        clicks = Counter(e.article_id for e in events if e.rank == 1)
        per_rank = [clicks.get(a.article_id, 0) for a in corpus.articles]
        deciles = [sum(per_rank[i : i + 10]) for i in range(0, 100, 10)]
        assert all(a >= b for a, b in zip(deciles, deciles[1:]))
        assert deciles[0] > deciles[-1]

    def test_events_round_trip_through_tsv(self):
        config = small_config(sessions=300)
        corpus = generate_corpus(config)
        events = generate_sessions(corpus, config)
        buf = io.StringIO()
        write_events(events, buf)
        buf.seek(0)
        stats = ParseStats()
        parsed = list(parse_log(buf, stats))
        assert stats.malformed == 0
        assert parsed == events

    def test_metadata_round_trip(self):
        corpus = generate_corpus(small_config())
        buf = io.StringIO()
        write_metadata(corpus.articles, buf)
        buf.seek(0)
        loaded = read_metadata(buf)
        assert list(loaded.values()) == corpus.articles


class TestPowerLawShrinkage:
    def test_dataset_volume_shrinks_as_min_clicks_rises(self, benchmark_result):
        from coclick.dataset import BuildConfig, build_examples
        from coclick.logs import read_aggregates, read_metadata

        with open(benchmark_result.paths["aggregates"], encoding="utf-8") as fh:
            aggregates = read_aggregates(fh)
        with open(benchmark_result.paths["articles"], encoding="utf-8") as fh:
            articles = read_metadata(fh)
        sizes = []
        for min_clicks in (20, 50, 100):
            config = BuildConfig(gold_threshold=0.11, min_clicks=min_clicks)
            examples, _ = build_examples(aggregates, articles, config)
            sizes.append(len(examples))
        assert sizes[0] > sizes[1] > sizes[2]


class TestPlantedGoldRecovery:
    def test_top_decile_jaccard_against_builder_gold(self, benchmark_result, benchmark_corpus):
        with open(benchmark_result.paths["test"], encoding="utf-8") as fh:
            examples = load_dataset(fh)
        with open(benchmark_result.paths["train"], encoding="utf-8") as fh:
            examples += load_dataset(fh)
        examples.sort(key=lambda e: -e.combined_clicks)
        decile = examples[: max(1, len(examples) // 10)]
        scores = []
        for ex in decile:
            planted = benchmark_corpus.planted_gold(ex.seed_id, ex.similar_id)
            union = planted | ex.gold_tokens
            scores.append(len(planted & ex.gold_tokens) / len(union) if union else 1.0)
        assert sum(scores) / len(scores) >= 0.8
