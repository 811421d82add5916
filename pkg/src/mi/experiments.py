# mi/experiments.py
import logging
from typing import Any, Iterable, Optional

import numpy as np

from core.errors import DataError
from core.seeding import derive_seed, substream
from corpus.synthetic import SyntheticCorpus
from corpus.types import LanguageTag
from mi.bounds import Critic, infonce_bound, optimize_critic
from mi.joint import DiscreteJoint, random_joint, true_mi
from vocab.vocabulary import tokenize

logger = logging.getLogger(__name__)

PRESETS = ("utterance", "context", "multilingual")


def _joint_from_pairs(pairs: Iterable[tuple[str, str]]) -> DiscreteJoint:
    pairs = list(pairs)
    if not pairs:
        raise DataError("no (context, masked token) pairs to count")
    a_symbols = sorted({a for a, _ in pairs})
    b_symbols = sorted({b for _, b in pairs})
    a_index = {s: i for i, s in enumerate(a_symbols)}
    b_index = {s: i for i, s in enumerate(b_symbols)}

    counts = np.zeros((len(a_symbols), len(b_symbols)))
    for a, b in pairs:
        counts[a_index[a], b_index[b]] += 1
    return DiscreteJoint.from_counts(counts)


def preset_joint(name: str, corpus: SyntheticCorpus, lang: Optional[LanguageTag] = None) -> DiscreteJoint:
    """
    Empirical (a, b) joint where b is a masked token and a what the model sees.

    utterance:    a = the token right before b in the same utterance
    context:      a = the token at b's position in the previous utterance
    multilingual: a = the token at b's position in the aligned translation
    """
    langs = corpus.spec.languages
    lang = lang or langs[0]
    pairs: list[tuple[str, str]] = []

    for movie_id in corpus.movie_ids:
        stream = [tokenize(u.text) for u in corpus.streams[(movie_id, lang)]]
        if name == "utterance":
            pairs.extend((prev, cur) for tokens in stream for prev, cur in zip(tokens, tokens[1:]))
        elif name == "context":
            for before, current in zip(stream, stream[1:]):
                pairs.extend(zip(before, current))
        elif name == "multilingual":
            other = next((l for l in langs if l != lang), None)
            if other is None:
                raise DataError("the multilingual preset needs a corpus with two languages")
            translated = [tokenize(u.text) for u in corpus.streams[(movie_id, other)]]
            for source, target in zip(translated, stream):
                pairs.extend(zip(source, target))
        else:
            raise DataError(f"unknown MI preset {name!r}, expected one of {PRESETS}")

    return _joint_from_pairs(pairs)


def bound_report(
    joint_id: str,
    joint: DiscreteJoint,
    steps: int = 500,
    lr: float = 0.1,
    seed: int = 0,
    n_random_critics: int = 3,
    factored_d: Optional[int] = None,
) -> dict[str, Any]:
    """Exact MI against constant, random and optimized critics on one joint"""
    mi = true_mi(joint)
    rng = substream(seed, f"critic:{joint_id}")

    initial = infonce_bound(joint, Critic.constant(joint.shape)).value
    random_bounds = [infonce_bound(joint, Critic.random(joint.shape, rng)).value for _ in range(n_random_critics)]
    critic, _ = optimize_critic(joint, steps=steps, lr=lr, seed=seed)
    final = infonce_bound(joint, critic).value

    report = {
        "joint_id": joint_id,
        "true_mi": mi,
        "bound_initial": initial,
        "bound_final": final,
        "bound_random_max": max(random_bounds) if random_bounds else initial,
        "candidate_set_size": joint.shape[1],
        "ln_candidates": float(np.log(joint.shape[1])),
        "steps": steps,
    }
    if factored_d:
        factored, _ = optimize_critic(joint, factored=True, d=factored_d, steps=steps, lr=lr, seed=seed)
        report["bound_factored"] = infonce_bound(joint, factored).value
        report["factored_d"] = factored_d

    bounds = [initial, final, *random_bounds, report.get("bound_factored", initial)]
    report["valid"] = all(b <= mi + 1e-9 and b <= report["ln_candidates"] + 1e-9 for b in bounds)
    return report


def mi_check(
    n_joints: int = 20,
    seed: int = 0,
    max_size: int = 16,
    steps: int = 500,
    lr: float = 0.1,
) -> list[dict[str, Any]]:
    """Bound validity over random joints of sizes 2..max_size"""
    if n_joints < 1 or max_size < 2:
        raise DataError("mi-check needs n_joints >= 1 and max_size >= 2")

    reports = []
    for j in range(n_joints):
        rng = substream(seed, "joint", j)
        size_a, size_b = (int(s) for s in rng.integers(2, max_size + 1, size=2))
        concentration = float(rng.choice([0.1, 0.5, 1.0, 5.0]))
        joint = random_joint(size_a, size_b, concentration, rng)
        reports.append(bound_report(f"random-{j:03d}", joint, steps, lr, derive_seed(seed, "critic", j)))

    invalid = [r["joint_id"] for r in reports if not r["valid"]]
    if invalid:
        logger.error(f"bound exceeded MI on {invalid}")
    else:
        logger.info(f"mi-check: bound <= MI on all {len(reports)} joints")
    return reports


def preset_reports(corpus: SyntheticCorpus, steps: int = 500, lr: float = 0.1, seed: int = 0) -> list[dict[str, Any]]:
    return [bound_report(f"preset-{name}", preset_joint(name, corpus), steps, lr, seed) for name in PRESETS]
