"""The whole pipeline through the command-line surface.

Generates a scene, renders an anchor with a combined camera move, scores it
against the source, trains the denoiser briefly and applies the refinement
pass; the same flow the studio frontend drives over HTTP.
"""

import json
from pathlib import Path

from recam.cli import main

OUT = Path(__file__).parent / "out" / "cli"
OUT.mkdir(parents=True, exist_ok=True)
scene = OUT / "scene"
anchor = OUT / "anchor"

steps = [
    ["synth-scene", "--seed", "12", "--objects", "6", "--frames", "8",
     "--width", "64", "--height", "64", "--focal", "64", "--out", str(scene)],
]
trajectory = {"frames": 8, "moves": [
    {"kind": "pan", "deg": 10, "ease": "smoothstep"},
    {"kind": "dolly", "units": 0.8, "ease": "linear"},
]}
(OUT / "move.json").write_text(json.dumps(trajectory, indent=2))
steps += [
    ["render-anchor", str(scene), str(OUT / "move.json"), str(anchor)],
    ["metrics", str(scene), str(anchor), "--mask-dir", str(anchor)],
    ["train-toy", str(anchor), str(scene), "--steps", "60", "--out", str(OUT / "run")],
    ["sdedit", str(anchor), str(OUT / "run" / "checkpoint.npz"),
     "--strength", "0.1", "--out-dir", str(OUT / "refined")],
]

for argv in steps:
    print(f"\n$ recam {' '.join(argv)}")
    code = main(argv)
    assert code == 0, f"exit {code}"

report = json.loads((anchor / "render_report.json").read_text())
print("\nper-frame valid fraction:", [round(v, 3) for v in report["valid_fraction"]])
print(f"artifacts under {OUT}")
