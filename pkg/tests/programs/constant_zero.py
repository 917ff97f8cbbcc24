"""Answers the handshake faithfully, then returns action 0 for every state."""
import json
import sys

for line in sys.stdin:
    msg = json.loads(line)
    if "protocol" in msg:
        reply = {"protocol": msg["protocol"], "action_space": msg["action_space"]}
    else:
        reply = {"action": 0}
    sys.stdout.write(json.dumps(reply) + "\n")
    sys.stdout.flush()
