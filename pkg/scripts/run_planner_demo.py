#!/usr/bin/env python3
"""Walk every bundled routing case through the planner and print the plans."""

from affkit.planner import ScriptedOracle, default_registry, evaluate_routing, plan
from affkit.routing_cases import bundled_cases


def main():
    registry = default_registry()
    for case in bundled_cases():
        produced, _ = plan(ScriptedOracle(case.answers), registry)
        steps = ", ".join(f"{v}:{p}" for v, p in produced.pairs())
        print(f"{case.name:42s} -> {steps}")
    report = evaluate_routing(registry, bundled_cases())
    print(f"\nrouting accuracy: {report.accuracy:.3f} over {report.n_cases} cases")


if __name__ == "__main__":
    main()
