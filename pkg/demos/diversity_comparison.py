"""Compare diversity metrics for a repetitive corpus and a varied one.

A generator that keeps producing near-identical texts scores higher on
intra-class pairwise similarity and lower on the n-gram score; attribute
conditioning is meant to push both the other way.
"""

from attrgen import diversity_report

repetitive = [
    "the market rallied on strong earnings today",
    "the market rallied on strong earnings again",
    "the market rallied on strong earnings news",
    "stocks fell sharply after the fed announcement",
    "stocks fell sharply after the fed statement",
    "stocks fell sharply after the fed meeting",
]
varied = [
    "chipmakers led a broad tech rally into the close",
    "municipal bonds drew cautious retail inflows this quarter",
    "a shipping bottleneck lifted spot freight rates",
    "regulators fined the exchange over reporting lapses",
    "grain futures slid on a record harvest forecast",
    "the startup priced its listing above the range",
]
labels = [0, 0, 0, 1, 1, 1]

for name, corpus in [("repetitive", repetitive), ("varied", varied)]:
    report = diversity_report(corpus, labels)
    print(f"{name:11s} vocab={report.vocab_all:3d} "
          f"aps_intra={report.aps_intra:.4f} ingf={report.ingf:.4f}")

print()
print("expected: the repetitive corpus has higher aps_intra and lower ingf")
