"""Per-caption and corpus-level metric reports."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from ..markup import CaptionSyntaxError, parse_caption, referenced_ids, strip_tags
from ..model import Frame, GroundingScore, LanguageScores, MetricReport
from .grounding import gmeteor, grounding_scores
from .language import bleu4, meteor, rouge_l, tokenize

METRIC_COLUMNS = ("precision", "recall", "f1", "bleu4", "meteor", "rouge_l", "gmeteor")


def caption_grounding(caption_text: str, frame: Frame) -> GroundingScore:
    """Grounding score of raw caption text; unparseable text scores zero."""
    try:
        ast = parse_caption(caption_text)
    except CaptionSyntaxError:
        return GroundingScore(
            tp=0, fp=0, fn=len(frame.objects), precision=0.0, recall=0.0, f1=0.0
        )
    return grounding_scores(referenced_ids(ast), frame.object_ids)


def score_caption(caption_text: str, frame: Frame, reference_text: str) -> MetricReport:
    """Full metric report for one caption against one frame and reference.

    Grounding compares referenced ids to the frame's objects; language
    metrics compare prose with grounding markup stripped (span text kept).
    """
    gs = caption_grounding(caption_text, frame)
    cand_tokens = tokenize(strip_tags(caption_text))
    ref_tokens = tokenize(strip_tags(reference_text))
    m = meteor(cand_tokens, ref_tokens)
    language = LanguageScores(
        meteor=m,
        bleu4=bleu4(cand_tokens, ref_tokens),
        rouge_l=rouge_l(cand_tokens, ref_tokens),
    )
    return MetricReport(grounding=gs, language=language, gmeteor=gmeteor(m, gs.f1))


@dataclass(frozen=True)
class CorpusReport:
    """Corpus aggregation: column means plus both gMETEOR aggregations.

    ``means['gmeteor']`` averages per-caption gMETEOR; ``gmeteor_corpus`` is
    the harmonic mean of corpus-level METEOR and F1 (the two aggregations can
    differ, so both are reported).
    """

    per_item: Tuple[Tuple[str, MetricReport], ...]
    means: Dict[str, float]
    gmeteor_corpus: float


def _columns(report: MetricReport) -> Dict[str, float]:
    return {
        "precision": report.grounding.precision,
        "recall": report.grounding.recall,
        "f1": report.grounding.f1,
        "bleu4": report.language.bleu4,
        "meteor": report.language.meteor,
        "rouge_l": report.language.rouge_l,
        "gmeteor": report.gmeteor,
    }


def score_corpus(items: Sequence[Tuple[str, str, Frame, str]]) -> CorpusReport:
    """Score (item_id, caption, frame, reference) tuples; deterministic order.

    Output is sorted by item id so batch parallelism cannot reorder it.
    """
    scored = sorted((item_id, score_caption(text, frame, ref)) for item_id, text, frame, ref in items)
    if not scored:
        return CorpusReport(per_item=(), means={c: 0.0 for c in METRIC_COLUMNS}, gmeteor_corpus=0.0)
    sums = {c: 0.0 for c in METRIC_COLUMNS}
    for _, report in scored:
        for column, value in _columns(report).items():
            sums[column] += value
    means = {c: sums[c] / len(scored) for c in METRIC_COLUMNS}
    return CorpusReport(
        per_item=tuple(scored),
        means=means,
        gmeteor_corpus=gmeteor(means["meteor"], means["f1"]),
    )


def format_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Aligned plain-text table."""
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines)
