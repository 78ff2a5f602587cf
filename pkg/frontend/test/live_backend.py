"""Boot the real backend for the live dashboard test.

Starts the full topology with the shipping bug seeded, replays the
standard workload through the shadower so the patch and regression
services have done their work, prints one JSON line with the ports, then
serves until stdin closes.
"""

import json
import sys
import time

from shadowpatch import appsim
from shadowpatch.cli import RunConfig, RunTopology
from shadowpatch.httpserve import HttpClient


def main() -> int:
    cfg = RunConfig(app_listen="127.0.0.1:0", listen="127.0.0.1:0",
                    control_listen="127.0.0.1:0")
    topo = RunTopology("shop", cfg, fault="shipping")
    try:
        workload = appsim.generate_workload("shop", 42)
        client = HttpClient("127.0.0.1", topo.proxy.port)
        try:
            for r in workload.all_requests():
                client.call(r)
        finally:
            client.close()
        deadline = time.monotonic() + 30
        while time.monotonic() < deadline:
            if not any(topo.shadower.queues[t] for t in topo.shadower.TARGETS):
                break
            time.sleep(0.05)
        print(json.dumps({"shadower": topo.proxy.port,
                          "control": topo.control.port}), flush=True)
        sys.stdin.read()  # hold until the test closes our stdin
    finally:
        topo.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
