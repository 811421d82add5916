# tests/conftest.py
import pytest

from corpus.synthetic import (
    SyntheticCorpusSpec,
    generate_synthetic_corpus,
    synthetic_contexts,
    synthetic_pairs,
    write_synthetic_corpus,
)
from corpus.types import Context, LanguageTag, TimedUtterance, TokenizedUtterance
from model.config import ModelConfig
from model.hierarchical import HierarchicalModel
from vocab.vocabulary import build_vocab


def timed(text: str, start: int, end: int, movie: str = "m1", lang: LanguageTag = LanguageTag.EN) -> TimedUtterance:
    return TimedUtterance(text, start, end, movie, lang)


def tokenized(*tokens: int, lang: LanguageTag = LanguageTag.EN) -> TokenizedUtterance:
    return TokenizedUtterance(tuple(tokens), lang)


def context_of(*utterances: TokenizedUtterance, movie: str = "m1") -> Context:
    return Context(tuple(utterances), movie)


@pytest.fixture(scope="session")
def synthetic_corpus():
    return generate_synthetic_corpus(SyntheticCorpusSpec(seed=0))


@pytest.fixture(scope="session")
def vocab(synthetic_corpus):
    return build_vocab(synthetic_corpus.texts(), max_size=10_000)


@pytest.fixture(scope="session")
def contexts(synthetic_corpus, vocab):
    return synthetic_contexts(synthetic_corpus, vocab, T=5)


@pytest.fixture(scope="session")
def pairs(synthetic_corpus, vocab):
    return synthetic_pairs(synthetic_corpus, vocab, T=5)


@pytest.fixture
def tiny_config(vocab):
    return ModelConfig.for_vocab(
        vocab, dim=16, heads=2, layers_u=1, layers_d=1, layers_dec=1, context_size=5, dropout=0.0
    )


@pytest.fixture
def tiny_model(tiny_config):
    return HierarchicalModel(tiny_config, seed=0).eval()


@pytest.fixture
def corpus_dir(tmp_path, synthetic_corpus):
    return write_synthetic_corpus(synthetic_corpus, tmp_path / "corpus")
