"""Rough efficiency envelope of each congestion set.

The ceiling is the processor-weighted dedicated efficiency. The floor
estimate charges every application one full serialisation of all I/O per
period, which no work-conserving scheduler exceeds on these workloads.
Together they bound how much any scheduler can move system efficiency.
"""
from dpsac.model import build_scenario


def envelope(scenario):
    apps = scenario.batch_apps()
    nodes = sum(a.nodes for a in apps)
    wait = sum(a.io_volume for a in apps) / scenario.system.pfs_bandwidth
    floor = sum(a.nodes * a.compute_work / (a.period + wait) for a in apps) / nodes
    ceiling = sum(a.nodes * a.dedicated_efficiency for a in apps) / nodes
    return wait, floor, ceiling


if __name__ == "__main__":
    print("set    serial wait (s)  floor   ceiling")
    for k in range(1, 11):
        wait, floor, ceiling = envelope(build_scenario(k))
        print(f"set{k:<3d}{wait:12.1f}     {floor:.4f}  {ceiling:.4f}")
