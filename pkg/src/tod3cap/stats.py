"""Corpus statistics over annotated scenes."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, Tuple

from .scene import CAPTION_PARTS, Scene
from .text import TOKENIZER_VERSION, tokenize


@dataclass
class StatsReport:
    n_scenes: int = 0
    n_frames: int = 0
    n_objects: int = 0
    n_captions: int = 0
    captions_per_frame: float = 0.0
    captions_per_scene: float = 0.0
    captions_per_object: float = 0.0
    vocabulary_size: int = 0
    # (word, count) sorted by descending count, then word
    word_frequency: List[Tuple[str, int]] = field(default_factory=list)
    sentence_length_histogram: Dict[int, int] = field(default_factory=dict)
    part_vocab_proportion: Dict[str, float] = field(
        default_factory=lambda: {p: 0.0 for p in CAPTION_PARTS})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tokenizer": TOKENIZER_VERSION,
            "n_scenes": self.n_scenes,
            "n_frames": self.n_frames,
            "n_objects": self.n_objects,
            "n_captions": self.n_captions,
            "captions_per_frame": self.captions_per_frame,
            "captions_per_scene": self.captions_per_scene,
            "captions_per_object": self.captions_per_object,
            "vocabulary_size": self.vocabulary_size,
            "part_vocab_proportion": dict(self.part_vocab_proportion),
            "sentence_length_histogram": {
                str(k): v for k, v in sorted(self.sentence_length_histogram.items())},
            "word_frequency": [[w, c] for w, c in self.word_frequency],
        }


def dataset_stats(scenes: Sequence[Scene]) -> StatsReport:
    """Caption counts, word frequencies, length histogram and part vocabularies.

    A caption is an annotation with a non-empty fused sentence. The part
    proportion is the share of the distinct words across all four parts that
    occur in the given part, so overlapping parts can sum past 1.
    """
    report = StatsReport()
    words: Counter = Counter()
    lengths: Counter = Counter()
    part_vocab = {p: set() for p in CAPTION_PARTS}
    object_ids = set()
    for scene in scenes:
        report.n_scenes += 1
        for frame in scene.frames:
            report.n_frames += 1
            for obj in frame.objects:
                report.n_objects += 1
                object_ids.add((scene.scene_id, obj.object_id))
                for part in CAPTION_PARTS:
                    part_vocab[part].update(tokenize(obj.caption.part(part)))
                tokens = tokenize(obj.caption.full)
                if not tokens:
                    continue
                report.n_captions += 1
                words.update(tokens)
                lengths[len(tokens)] += 1

    if report.n_frames:
        report.captions_per_frame = report.n_captions / report.n_frames
    if report.n_scenes:
        report.captions_per_scene = report.n_captions / report.n_scenes
    if object_ids:
        report.captions_per_object = report.n_captions / len(object_ids)
    report.vocabulary_size = len(words)
    report.word_frequency = sorted(words.items(), key=lambda kv: (-kv[1], kv[0]))
    report.sentence_length_histogram = dict(sorted(lengths.items()))
    union = set().union(*part_vocab.values())
    if union:
        report.part_vocab_proportion = {
            p: len(part_vocab[p]) / len(union) for p in CAPTION_PARTS}
    return report
