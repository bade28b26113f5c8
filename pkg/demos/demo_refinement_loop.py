"""Drive the three-stage generation pipeline and the F1-gated refinement loop
against a scripted captioner (no external model needed).

Run:  python demos/demo_refinement_loop.py
"""

from gdcap.geometry import Box
from gdcap.model import Frame, SceneObject
from gdcap.refinement import ScriptedCaptioner, generate_pipeline, refine


def tagged(ids):
    spans = " ".join(
        f'<gdo class="{i.rsplit("-", 1)[0]}" {i}>the {i.rsplit("-", 1)[0]}</gdo>' for i in ids
    )
    return f"A frame showing {spans}."


def main():
    frame = Frame(
        frame_id="demo",
        width=320,
        height=240,
        image_ref="demo.png",
        objects=tuple(
            SceneObject(i, i.rsplit("-", 1)[0], Box(20 * (n + 1), 30, 18, 18), n, 0.9)
            for n, i in enumerate(["person-0", "person-1", "dog-0", "car-0"])
        ),
    )

    # Script: stage 1 (general), stage 2 (one crop per object), stage 3
    # (synthesis missing two ids), then refine attempts that add one id each.
    script = (
        ["Two people and a dog near a car."]
        + [f"crop caption {n}" for n in range(len(frame.objects))]
        + [tagged(["person-0", "person-1"])]
    )
    captioner = ScriptedCaptioner(
        script
        + [tagged(["person-0", "person-1", "dog-0"]), tagged(["person-0", "person-1", "dog-0", "car-0"])]
    )

    synthesized = generate_pipeline(frame, captioner)
    print("synthesis:", synthesized)

    result = refine(frame, captioner, initial_caption=synthesized)
    print("\nattempt log:")
    for a in result.attempts:
        print(f"  attempt {a.attempt}: temperature={a.temperature:.1f} f1={a.f1:.3f}")
    print("\nconverged:", result.converged, "best F1:", f"{result.best_f1:.3f}")
    print("best caption:", result.best_text)

    print("\nrequests the captioner saw (stage, temperature):")
    for req in captioner.requests:
        print(f"  {req.stage:12s} t={req.temperature:.1f}"
              + (f" crop={req.crop}" if req.crop else ""))


if __name__ == "__main__":
    main()
