import json
import sys

with open(sys.argv[1]) as f:
    text = f.read()
print("progress: scored", len(text), "bytes")
print(json.dumps({"reward": len(text) / 100.0}))
