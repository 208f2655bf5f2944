"""Reward for a program defining solve() -> list of floats: -sum((x - 3)^2)."""
import json
import runpy
import sys

ns = runpy.run_path(sys.argv[1])
xs = ns["solve"]()
print(json.dumps({"reward": -sum((x - 3.0) ** 2 for x in xs)}))
