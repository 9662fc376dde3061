"""Start a disposable review service for the console's integration test.

Builds one 20-item text run with a 10-item review budget, advances it to
the reviewing stage, then serves the review API on a free localhost port.
Prints a single machine-readable line so the test harness can connect:

    PORT <port> RUN <run_id> DIR <run_dir>
"""

from __future__ import annotations

import socket
import sys
import tempfile
from pathlib import Path

import numpy as np
import uvicorn

from labelvet.backends import BackendConfig
from labelvet.data import Dataset, Item, save_dataset
from labelvet.pipeline import AgentConfig, PipelineConfig, run_pipeline
from labelvet.service import create_app
from labelvet.simulator import SimulatorConfig

LABELS = ("cat", "dog", "fox", "owl")


def build_run(workdir: Path) -> tuple[str, Path]:
    rng = np.random.default_rng(0)
    items = tuple(
        Item(
            item_id=i,
            content={"kind": "text", "text": f"description of item {i}"},
            label_space=LABELS,
            hidden_truth=int(rng.integers(0, len(LABELS))),
        )
        for i in range(20)
    )
    dataset_path = workdir / "dataset.jsonl"
    save_dataset(Dataset(items), dataset_path)
    config = PipelineConfig(
        dataset_path=str(dataset_path),
        output_dir=str(workdir / "runs"),
        annotator=AgentConfig(
            strategy="naive",
            backend=BackendConfig(
                backend_id="annotator", endpoint="simulated",
                simulator=SimulatorConfig(accuracy=0.8, seed=1)),
        ),
        criticizer=AgentConfig(
            strategy="naive",
            backend=BackendConfig(
                backend_id="criticizer", endpoint="simulated",
                simulator=SimulatorConfig(seed=2)),
        ),
        rule="threshold",
        budget=10,
        review_mode="interactive",
    )
    run = run_pipeline(config)  # interactive mode stops at `reviewing`
    run_dir = Path(config.output_dir) / run.state.run_id
    return run.state.run_id, run_dir


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def main() -> None:
    workdir = Path(tempfile.mkdtemp(prefix="labelvet-console-"))
    run_id, run_dir = build_run(workdir)
    port = free_port()
    print(f"PORT {port} RUN {run_id} DIR {run_dir}", flush=True)
    app = create_app(workdir / "runs")
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="error")


if __name__ == "__main__":
    sys.exit(main())
