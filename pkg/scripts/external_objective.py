"""Example external objective: reads {"x": [...]} lines, answers {"y": ...}.

Use it from a run config:

    [objective]
    external = { command = ["python", "scripts/external_objective.py"], timeout = 10.0 }
"""
import json
import math
import sys

for line in sys.stdin:
    x = json.loads(line)["x"]
    y = sum(v * v for v in x) + 0.1 * math.sin(5 * x[0])
    sys.stdout.write(json.dumps({"y": y}) + "\n")
    sys.stdout.flush()
