"""Start a broker on a loopback port and run a publisher and a subscriber against it.

Run:  python3 demos/loopback_broker.py
"""
import os
from concurrent.futures import ThreadPoolExecutor

from gpmatch.blinding import RandomTape
from gpmatch.circuit import parse_sexp
from gpmatch.net.broker import BrokerThread
from gpmatch.net.client import publish, subscribe

seed = os.urandom(32)  # shared by publisher and subscriber, never by the broker
predicate = parse_sexp("(and x2 (not x0))")

with BrokerThread() as broker, ThreadPoolExecutor(2) as pool:
    for metadata in ([0, 1, 1, 0], [1, 1, 1, 0]):
        sid = os.urandom(16)
        pub = pool.submit(publish, broker.endpoint, metadata, b"quarterly report", RandomTape.from_seed(seed), sid)
        sub = pool.submit(subscribe, broker.endpoint, predicate, RandomTape.from_seed(seed), sid)
        got = sub.result()
        print(f"metadata {metadata}: matched={pub.result().matched}, subscriber received {got.payload!r}")
    print(f"payload frames forwarded by the broker: {broker.broker.forwarded}")
