"""
Can an eavesdropper follow a car?
=================================

Record 300 sessions each from two tags and train a nearest-neighbour
classifier on the raw ciphertext bits. Honest tags should leave it guessing.
A deliberately broken tag (static key, constant IV) is caught at once.
"""
from rfidsim import adversary as adv

live = adv.LiveSystem(seed=3)
a, b = live.tags

honest = adv.tracking_distinguisher(
    [live.honest_transcript(a) for _ in range(300)],
    [live.honest_transcript(b) for _ in range(300)],
)
weak = adv.tracking_distinguisher(adv.weak_transcripts(live, a, 300), adv.weak_transcripts(live, b, 300))

print(f"honest tags: accuracy {honest.accuracy:.3f}, linkable {honest.linkable}")
print(f"weak tags:   accuracy {weak.accuracy:.3f}, linkable {weak.linkable}")
