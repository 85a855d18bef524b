"""Regenerate the frozen submodularity counterexamples.

    python tests/fixtures/make_counterexamples.py

Searches seeded random stable systems (n=3, p=5) for the first violation of
diminishing returns for each metric the property table marks as not
submodular, and writes the system plus the violating triple to JSON.
"""

import json
from pathlib import Path

import numpy as np

from sensorselect.observability import GramianMetric, SubsetScorer
from sensorselect.setfunc import submodularity_violations, tabulate

OUT = Path(__file__).parent / "submodularity_counterexamples.json"


def search(metric, seed=7, attempts=200):
    rng = np.random.default_rng(seed)
    for attempt in range(attempts):
        n, p = 3, 5
        A = rng.standard_normal((n, n))
        A *= rng.uniform(0.3, 0.95) / np.max(np.abs(np.linalg.eigvals(A)))
        B = rng.standard_normal((n, 2))
        C = rng.standard_normal((p, n))
        scorer = SubsetScorer(A, B, C, None, metric)
        table = tabulate(scorer.score, p)
        found = submodularity_violations(table, p, limit=1)
        if found:
            v = found[0]
            return {
                "metric": metric.value,
                "search_seed": seed,
                "attempt": attempt,
                "A": A.tolist(),
                "B": B.tolist(),
                "C": C.tolist(),
                "small": list(v.small),
                "large": list(v.large),
                "element": v.element,
                "gain_small": v.lhs,
                "gain_large": v.rhs,
            }
    raise RuntimeError(f"no violation found for {metric}")


def main():
    cases = [search(m) for m in GramianMetric if not m.submodular]
    OUT.write_text(json.dumps(cases, indent=2) + "\n")
    for c in cases:
        print(c["metric"], c["attempt"], c["small"], c["large"], c["element"], c["gain_small"], c["gain_large"])


if __name__ == "__main__":
    main()
