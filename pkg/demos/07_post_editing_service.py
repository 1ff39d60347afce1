"""The post-editing loop over the HTTP API (driven in-process here).

Fetch the next task, patch a turn under optimistic concurrency, watch a
stale write get rejected, and read the progress counters.  To edit in a
browser instead, run ``todkit serve`` and open the frontend.
"""

import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from todkit import load_dataset, save_dataset
from todkit.service import create_app

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

with tempfile.TemporaryDirectory() as tmp:
    dataset_path = Path(tmp) / "dataset.json"
    save_dataset(load_dataset(FIXTURES / "demo_dialogue.json"), dataset_path)
    client = TestClient(create_app(dataset_path,
                                   db_path=FIXTURES / "demo_db.json",
                                   vm_path=None))

    task = client.get("/api/turns/next", params={"filter": "all"}).json()
    print(f"next task: {task['dialogue_id']} turn {task['turn_id']} "
          f"(version {task['version']}, {len(task['findings'])} findings)")

    patched = client.put(
        f"/api/turns/{task['dialogue_id']}/{task['turn_id']}",
        json={"base_version": task["version"],
              "agent_utterance": "You could visit Guanqian Street.",
              "spans": [s for s in task["spans"] if s["side"] == "user"]}).json()
    print(f"patch accepted, new version {patched['version']}, "
          f"findings now: {[f['code'] for f in patched['findings']]}")

    stale = client.put(
        f"/api/turns/{task['dialogue_id']}/{task['turn_id']}",
        json={"base_version": task["version"], "agent_utterance": "overwrite!"})
    print(f"stale write -> HTTP {stale.status_code} ({stale.json()['code']})")

    print("progress:", client.get("/api/progress").json())
