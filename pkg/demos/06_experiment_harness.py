"""Run the config-driven pipeline end to end and read the aggregate report.

Equivalent to `slatesim evaluate --config <file>`: per seed it ingests data,
pretrains the simulator, trains the configured agent, evaluates, and finally
aggregates mean/std across seeds into report.json / report.tsv.
"""

import json
import tempfile
from pathlib import Path

from slatesim import load_config, run_experiment

CONFIG = """
data.synth.users = 80
data.synth.items = 50
data.synth.days = 5
env.mode = whole_session
env.slate_size = 5
env.max_step = 5
env.hist_cap = 10
uirm.epochs = 3
agent.name = cf
eval.sessions = 60
run.seeds = 1,2,3
"""

with tempfile.TemporaryDirectory() as tmp:
    cfg_path = Path(tmp) / "demo.cfg"
    cfg_path.write_text(CONFIG)
    cfg = load_config(cfg_path)
    out = Path(tmp) / "run"
    result = run_experiment(cfg, out)
    assert result.status == 0, result.error

    print("emitted files:")
    for path in sorted(out.rglob("*")):
        if path.is_file():
            print(f"  {path.relative_to(out)}")

    report = json.loads((out / "report.json").read_text())
    print("\naggregate metrics (mean +- std across 3 seeds):")
    for name, entry in sorted(report["metrics"].items()):
        print(f"  {name:15s} {entry['mean']:8.3f} +- {entry['std']:.3f}")
    print("\nsimulator fidelity (held-out AUC):")
    for name, value in sorted(report["auc"].items()):
        print(f"  {name:10s} {value:.4f}" if value is not None else f"  {name}")
