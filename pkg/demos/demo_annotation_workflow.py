"""End-to-end annotation study against an in-process service instance:
seed a store, hand out refine/rate tasks, submit work, print the agreement
report.

Run:  python demos/demo_annotation_workflow.py
"""

import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from gdcap.geometry import Box
from gdcap.model import Frame, SceneObject
from gdcap.service import ServiceConfig, create_app
from gdcap.store import CaptionRecord, FrameStore, utc_now

TOKENS = {"tok-ana": "ana", "tok-ben": "ben", "tok-cat": "cat", "tok-dan": "dan"}


def auth(rater):
    token = next(t for t, r in TOKENS.items() if r == rater)
    return {"Authorization": f"Bearer {token}"}


def main():
    root = Path(tempfile.mkdtemp()) / "store"
    store = FrameStore(root)
    for i in range(3):
        store.save_frame(
            Frame(
                frame_id=f"f{i}", width=100, height=100, image_ref="image.png",
                objects=(
                    SceneObject("person-0", "person", Box(10, 10, 20, 30), 0, 0.95),
                    SceneObject("car-0", "car", Box(50, 60, 30, 20), 1, 0.9),
                ),
            )
        )
        store.save_caption(
            CaptionRecord(
                caption_id=f"c{i}", frame_id=f"f{i}", source="auto",
                text='A <gdo class="person" person-0>figure</gdo> stands.',
                revision=1, created_at=utc_now(),
            ),
            expected_revision=0,
        )

    client = TestClient(create_app(ServiceConfig(store_root=root, tokens=TOKENS, study_seed=4)))

    print("== ana refines a caption")
    task = client.get("/tasks/next", params={"kind": "refine"}, headers=auth("ana")).json()["task"]
    print("   task:", task["task_id"])
    better = (
        'A <gdo class="person" person-0>figure</gdo> stands by '
        'a <gdo class="car" car-0>car</gdo>.'
    )
    response = client.post(
        f"/tasks/{task['task_id']}/refinement",
        json={"text": better, "base_revision": 1},
        headers=auth("ana"),
    ).json()
    print("   new revision:", response["revision"], " F1:", response["grounding"]["f1"])

    print("\n== three raters rate what they can (ana never sees her own caption)")
    for rater in ("ana", "ben", "cat", "dan"):
        rated = 0
        while True:
            task = client.get("/tasks/next", params={"kind": "rate"}, headers=auth(rater)).json()["task"]
            if task is None:
                break
            client.post(
                f"/tasks/{task['task_id']}/rating",
                json={"criteria": [4, 4, 5, 5, 4]},
                headers=auth(rater),
            )
            rated += 1
        print(f"   {rater} rated {rated} captions")

    print("\n== agreement report")
    report = client.get("/reports/agreement", headers=auth("ana")).json()
    for source, criteria in report["sources"].items():
        print(f"   source={source}")
        for criterion, cell in criteria.items():
            print(f"     {criterion:22s} alpha={cell['alpha']} mean={cell['mean']:.2f} "
                  f"n={cell['n_ratings']}")


if __name__ == "__main__":
    main()
