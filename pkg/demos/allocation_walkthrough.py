"""How match levels become bit budgets, on a three-object toy scene.

    python3 demos/allocation_walkthrough.py
"""
from pragcomm.allocation import allocate, relevance, uniform_plan
from pragcomm.kb import KnowledgeBase, RdCurve
from pragcomm.matcher import MatchTriple
from pragcomm.scene import BBox, ChannelState, MatchLevel, ObjectAnnotation, SceneDescription

H, M, L = MatchLevel.HIGH, MatchLevel.MEDIUM, MatchLevel.LOW

channel = ChannelState(wire_budget_bytes=10_000)
key = channel.key
kb = KnowledgeBase([
    RdCurve("dog", key, ((2000, 24.0), (20000, 38.0))),
    RdCurve("car", key, ((3000, 24.0), (30000, 38.0))),
    RdCurve("tree", key, ((1500, 24.0), (12000, 38.0))),
    RdCurve("*", key, ((2000, 20.0), (40000, 36.0))),
])
scene = SceneDescription("toy", 256, 256, "a dog near a car under a tree", (
    ObjectAnnotation(0, "dog", "a brown dog", BBox(10, 120, 80, 90)),
    ObjectAnnotation(1, "car", "a red car", BBox(120, 140, 120, 80)),
    ObjectAnnotation(2, "tree", "a tall tree", BBox(150, 0, 90, 130)),
))
# the receiver asked for the dog, something car-like, and not the tree
triples = [MatchTriple(H, H, H), MatchTriple(M, M, L), MatchTriple(L, L, L)]
scores = [relevance(t) for t in triples]
for obj, t, s in zip(scene.objects, triples, scores):
    print(f"{obj.category:5s} triple {t.as_tuple()} -> score {s}")

plan = allocate(scene, scores, channel, kb)
flat = uniform_plan(scene, channel)
print(f"\nsource pool {plan.source_pool_bits} bits")
print(f"{'region':10s} {'factor':>7s} {'intent':>8s} {'uniform':>8s}")
for e, u in zip(plan.objects, flat.objects):
    print(f"{e.category:10s} {e.factor:7.3f} {e.source_bits:8d} {u.source_bits:8d}")
print(f"{'background':10s} {plan.background_factor:7.3f} {plan.background_bits:8d} "
      f"{flat.background_bits:8d}")
