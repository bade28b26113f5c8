"""Caption evaluation metrics: grounding, language, combined, and agreement."""

from .agreement import average_ranks, krippendorff_alpha, pearson, spearman
from .grounding import gmeteor, grounding_scores
from .language import bleu4, meteor, rouge_l, tokenize
from .report import (
    METRIC_COLUMNS,
    CorpusReport,
    caption_grounding,
    format_table,
    score_caption,
    score_corpus,
)

__all__ = [
    "METRIC_COLUMNS",
    "CorpusReport",
    "average_ranks",
    "bleu4",
    "caption_grounding",
    "format_table",
    "gmeteor",
    "grounding_scores",
    "krippendorff_alpha",
    "meteor",
    "pearson",
    "rouge_l",
    "score_caption",
    "score_corpus",
    "spearman",
    "tokenize",
]
