"""Parse a grounded caption, validate it against a frame, and score it.

Run:  python demos/demo_markup_and_metrics.py
"""

from gdcap.geometry import Box
from gdcap.markup import parse_caption, referenced_ids, serialize_caption, validate_text
from gdcap.metrics import score_caption
from gdcap.model import Frame, SceneObject

CAPTION = (
    'In a narrow street, <gdo class="person" person-0>a courier</gdo> '
    '<gda class="lean" person-0 bicycle-0>leans</gda> on '
    '<gdo class="bicycle" bicycle-0>an old bicycle</gdo> beside '
    '<gdl class="wall" wall-0 wall-1>brick walls</gdl>.'
)

REFERENCE = "A courier leans on an old bicycle beside brick walls in a narrow street."


def main():
    frame = Frame(
        frame_id="demo",
        width=640,
        height=360,
        image_ref="demo.png",
        objects=(
            SceneObject("person-0", "person", Box(80, 60, 90, 200), 0, 0.97),
            SceneObject("bicycle-0", "bicycle", Box(150, 140, 120, 130), 1, 0.91),
            SceneObject("wall-0", "wall", Box(0, 0, 200, 300), 2, 0.88),
            SceneObject("wall-1", "wall", Box(430, 0, 210, 300), 2, 0.88),
            SceneObject("car-0", "car", Box(480, 220, 140, 90), 3, 0.93),
        ),
    )

    ast = parse_caption(CAPTION)
    print("segments:")
    for seg in ast.segments:
        print(f"  {seg!r}")
    print("\nround-trip ok:", serialize_caption(ast) == CAPTION)
    print("referenced ids:", sorted(referenced_ids(ast)))

    diag = validate_text(CAPTION, frame)
    print("\ndiagnostics ok:", diag.ok)
    print("unknown ids:", diag.unknown_ids)

    report = score_caption(CAPTION, frame, REFERENCE)
    g = report.grounding
    print(f"\ngrounding: tp={g.tp} fp={g.fp} fn={g.fn} "
          f"P={g.precision:.3f} R={g.recall:.3f} F1={g.f1:.3f}")
    print("   (car-0 was detected but never referenced, so recall drops)")
    lang = report.language
    print(f"language: METEOR={lang.meteor:.3f} BLEU-4={lang.bleu4:.3f} ROUGE-L={lang.rouge_l:.3f}")
    print(f"gMETEOR (harmonic mean of METEOR and F1): {report.gmeteor:.3f}")

    broken = CAPTION.replace("</gdo> beside", " beside")
    diag = validate_text(broken, frame)
    print("\na malformed edit is caught with a position:")
    for position, message in diag.syntax_errors:
        print(f"  at {position}: {message}")


if __name__ == "__main__":
    main()
