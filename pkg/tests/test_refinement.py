import pytest

from gdcap.errors import CaptionerError, RefinementError
from gdcap.markup import serialize_caption
from gdcap.refinement import (
    STAGE_GENERAL,
    STAGE_OBJECT_CROP,
    STAGE_REFINE,
    STAGE_SYNTHESIS,
    CaptionerRequest,
    Feedback,
    ScriptedCaptioner,
    build_feedback,
    generate_and_refine,
    generate_pipeline,
    object_metadata,
    refine,
    temperature_at,
)
from gdcap.markup import Diagnostics, parse_caption, validate_against_frame
from gdcap.metrics import grounding_scores
from gdcap.markup import referenced_ids

from .fixtures import make_frame
from .oracles import grounding_by_enumeration


def caption_for(ids, cls_of=lambda i: i.rsplit("-", 1)[0]):
    spans = " ".join(f'<gdo class="{cls_of(i)}" {i}>the {cls_of(i)}</gdo>' for i in ids)
    return f"A scene with {spans}."


# -- temperature schedule ----------------------------------------------------


def test_temperature_first_attempt():
    assert temperature_at(1) == 0.5


def test_temperature_schedule_ten_attempts():
    trace = [temperature_at(a) for a in range(1, 11)]
    assert trace == [0.5, 0.5, 0.6, 0.6, 0.7, 0.7, 0.8, 0.8, 0.9, 0.9]


def test_temperature_caps_at_one():
    assert temperature_at(12) == pytest.approx(1.0)
    assert temperature_at(50) == 1.0


def test_temperature_rejects_nonpositive_attempts():
    with pytest.raises(ValueError):
        temperature_at(0)


# -- feedback ------------------------------------------------------------------


def _feedback_for(text, frame):
    ast = parse_caption(text)
    diag = validate_against_frame(ast, frame)
    score = grounding_scores(referenced_ids(ast), frame.object_ids)
    return build_feedback(diag, score, frame, ast)


def test_feedback_perfect_caption_empty():
    frame = make_frame(["car-0"])
    fb = _feedback_for(caption_for(["car-0"]), frame)
    assert fb == Feedback()


def test_feedback_missing_id():
    frame = make_frame(["car-0", "person-0"])
    fb = _feedback_for(caption_for(["person-0"]), frame)
    assert fb.missing_ids == {"car-0"}
    assert fb.spurious_ids == set()


def test_feedback_spurious_id():
    frame = make_frame(["person-0"])
    fb = _feedback_for(caption_for(["person-9"]), frame)
    assert fb.spurious_ids == {"person-9"}
    assert fb.missing_ids == {"person-0"}
    oracle = grounding_by_enumeration({"person-9"}, {"person-0"})
    assert oracle["fp"] == 1 and oracle["fn"] == 1


# -- refine loop ------------------------------------------------------------------


def test_refine_perfect_first_attempt():
    frame = make_frame(["car-0"])
    captioner = ScriptedCaptioner([caption_for(["car-0"])])
    result = refine(frame, captioner, initial_caption="A scene.")
    assert result.converged
    assert result.best_f1 == 1.0
    assert [a.attempt for a in result.attempts] == [1]


def test_refine_trajectory_one_id_per_attempt():
    ids = ["car-0", "person-0", "tree-0"]
    frame = make_frame(ids)
    captioner = ScriptedCaptioner(
        [caption_for(ids[:1]), caption_for(ids[:2]), caption_for(ids)]
    )
    result = refine(frame, captioner, initial_caption="A scene.")
    assert [round(a.f1, 6) for a in result.attempts] == [0.5, 0.8, 1.0]
    assert result.converged
    assert len(result.attempts) == 3
    # feedback chains off the previous response
    second_request = captioner.requests[1]
    assert second_request.stage == STAGE_REFINE
    assert second_request.prior_caption == caption_for(ids[:1])
    assert second_request.feedback.missing_ids == {"person-0", "tree-0"}


def test_refine_all_malformed_exhausts_attempts():
    frame = make_frame(["car-0"])
    captioner = ScriptedCaptioner(['<gdo class="car" car-0>broken'] * 10)
    result = refine(frame, captioner, initial_caption="A scene.")
    assert not result.converged
    assert result.best_f1 == 0.0
    assert len(result.attempts) == 10
    assert result.best_caption is None
    # malformed responses produce syntax feedback for the next attempt
    assert captioner.requests[1].feedback.syntax_errors


def test_refine_retains_best_when_later_attempts_regress():
    ids = ["car-0", "person-0"]
    frame = make_frame(ids)
    good = caption_for(ids[:1])  # f1 = 2/3
    bad = caption_for(["dog-9"])  # f1 = 0
    captioner = ScriptedCaptioner([good] + [bad] * 9)
    result = refine(frame, captioner, initial_caption="A scene.")
    assert not result.converged
    assert result.best_f1 == pytest.approx(2 / 3)
    assert serialize_caption(result.best_caption) == good
    assert len(result.attempts) == 10
    running_max = 0.0
    for attempt in result.attempts:
        running_max = max(running_max, attempt.f1)
    assert running_max == result.best_f1


def test_refine_transport_failures_recorded_not_fatal():
    frame = make_frame(["car-0"])
    captioner = ScriptedCaptioner([CaptionerError("boom"), caption_for(["car-0"])])
    result = refine(frame, captioner, initial_caption="A scene.")
    assert result.converged
    assert result.attempts[0].error is not None
    assert result.attempts[1].f1 == 1.0


def test_refine_all_transport_failures_raise_with_log():
    frame = make_frame(["car-0"])
    captioner = ScriptedCaptioner([CaptionerError("boom")] * 10)
    with pytest.raises(RefinementError) as exc:
        refine(frame, captioner, initial_caption="A scene.")
    assert len(exc.value.attempts) == 10


def test_refine_temperature_trace_matches_closed_form():
    frame = make_frame(["car-0", "person-0", "tree-0", "dog-0"])
    captioner = ScriptedCaptioner([caption_for(["car-0"])] * 10)
    result = refine(frame, captioner, initial_caption="A scene.")
    assert [a.temperature for a in result.attempts] == [
        0.5, 0.5, 0.6, 0.6, 0.7, 0.7, 0.8, 0.8, 0.9, 0.9
    ]


def test_refine_zero_object_frame_trivially_converges():
    frame = make_frame([])
    captioner = ScriptedCaptioner(["An empty scene."])
    result = refine(frame, captioner, initial_caption="A scene.")
    assert result.converged and result.best_f1 == 1.0


def test_refine_rescoring_best_caption_reproduces_best_f1():
    ids = ["car-0", "person-0", "tree-0"]
    frame = make_frame(ids)
    captioner = ScriptedCaptioner([caption_for(ids[:2])] * 10)
    result = refine(frame, captioner, initial_caption="A scene.")
    rescored = grounding_scores(referenced_ids(result.best_caption), frame.object_ids)
    assert rescored.f1 == result.best_f1


# -- request validation -------------------------------------------------------------


def test_refine_request_requires_prior_and_feedback():
    with pytest.raises(ValueError):
        CaptionerRequest(frame_ref="f", objects=(), stage=STAGE_REFINE, temperature=0.5)


def test_object_crop_request_requires_crop():
    with pytest.raises(ValueError):
        CaptionerRequest(frame_ref="f", objects=(), stage=STAGE_OBJECT_CROP, temperature=0.5)


def test_object_metadata_is_normalized():
    frame = make_frame(["car-0"])
    meta = object_metadata(frame)
    assert len(meta) == 1
    assert 0.0 <= meta[0].x <= 1.0 and 0.0 <= meta[0].w <= 1.0
    assert meta[0].object_id == "car-0" and meta[0].class_name == "car"


# -- pipeline -------------------------------------------------------------------------


def test_pipeline_zero_object_frame_skips_stage_two():
    frame = make_frame([])
    captioner = ScriptedCaptioner(["general caption", "synthesized caption"])
    text = generate_pipeline(frame, captioner)
    assert text == "synthesized caption"
    stages = [r.stage for r in captioner.requests]
    assert stages == [STAGE_GENERAL, STAGE_SYNTHESIS]
    assert captioner.requests[1].prior_caption == "general caption"


def test_pipeline_issues_one_crop_request_per_object():
    frame = make_frame(["car-0", "person-0"])
    captioner = ScriptedCaptioner(["general", "crop-car", "crop-person", "synth"])
    generate_pipeline(frame, captioner)
    crop_requests = [r for r in captioner.requests if r.stage == STAGE_OBJECT_CROP]
    assert len(crop_requests) == 2
    assert [r.crop for r in crop_requests] == [o.box for o in frame.objects]
    synthesis = captioner.requests[-1]
    assert synthesis.object_captions == (("car-0", "crop-car"), ("person-0", "crop-person"))


def test_pipeline_stage_error_identifies_stage():
    frame = make_frame(["car-0"])
    captioner = ScriptedCaptioner(["general", CaptionerError("down")])
    with pytest.raises(CaptionerError) as exc:
        generate_pipeline(frame, captioner)
    assert "object_crop" in str(exc.value)


def test_generate_and_refine_end_to_end_scripted():
    ids = ["car-0", "person-0"]
    frame = make_frame(ids)
    captioner = ScriptedCaptioner(
        ["general", "crop1", "crop2", caption_for(ids[:1]), caption_for(ids)]
    )
    result = generate_and_refine(frame, captioner)
    assert result.converged
    assert result.best_f1 == 1.0
    # synthesis scored 2/3 so exactly one refine attempt ran
    refine_requests = [r for r in captioner.requests if r.stage == STAGE_REFINE]
    assert len(refine_requests) == 1
    assert refine_requests[0].prior_caption == caption_for(ids[:1])


def test_generate_and_refine_short_circuits_on_good_synthesis():
    ids = ["car-0"]
    frame = make_frame(ids)
    captioner = ScriptedCaptioner(["general", "crop", caption_for(ids)])
    result = generate_and_refine(frame, captioner)
    assert result.converged and result.attempts == []
    assert all(r.stage != STAGE_REFINE for r in captioner.requests)
