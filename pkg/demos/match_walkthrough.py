"""Walk one subscriber predicate through every variant and all metadata values.

Run:  python3 demos/match_walkthrough.py
"""
import itertools

from gpmatch import protocols as pr
from gpmatch.circuit import evaluate, parse_sexp

SEED = bytes(range(32))
predicate = parse_sexp("(or (and x0 x1) (not x1))")
print(f"predicate depth {predicate.depth}, inputs {predicate.inputs}")

for variant in (pr.OFSGP, pr.FSGP):
    s = pr.negotiate_structure(variant, 2, predicate.depth)
    print(f"\n{variant}: {s.total_slots} slots, {s.publisher_slots} held by the publisher")
    for m in itertools.product((0, 1), repeat=2):
        r = pr.run_session(variant, 2, predicate, list(m), SEED)
        direct = evaluate(predicate, {"x0": m[0], "x1": m[1]})
        print(f"  m={m}: broker sees {r.broker_value}, matched={r.matched}, direct={direct}")

print("\nugp (one session, about 16.7M elements; takes a few seconds)")
r = pr.run_session(pr.UGP, 2, parse_sexp("(and x0 x1)"), [1, 1], SEED, depth_bound=1)
print(f"  m=(1, 1): matched={r.matched}")
