"""Smoke test for the prunekit_py extension module.

Build and install first:

    pip install --no-build-isolation -e crates/python
"""

import json

import prunekit_py as pk


def main():
    assert set(pk.zoo_names()) >= {"fig3_toy", "vgg16_cifar10"}

    g = pk.Graph.zoo("fig3_toy")
    assert g.prunable_ids() == ["conv1", "conv2", "conv3"]
    assert g.validate() == []
    c = g.complexity(flops_factor=1)
    assert c["per_layer"]["conv1"]["flops"] == 3 * 9 * 32 * 30 * 30
    assert c["totals"]["memory_bytes"] == 4 * c["totals"]["params"]

    w = dict(g.relative_weights("params"))
    assert abs(sum(w.values()) - 1.0) < 1e-12

    again = pk.Graph.from_json(g.to_json())
    assert again.to_json() == g.to_json()

    smaller = g.remove_filters("conv2", {0, 5, 9})
    assert smaller.out_channels("conv2") == 61
    assert smaller.in_channels("conv3") == 61
    assert g.out_channels("conv2") == 64

    vgg = pk.Graph.zoo("vgg16_cifar10")
    base = vgg.complexity()["totals"]["flops"]
    pruned, trace_json = vgg.prune("flops", base // 2, seed=7)
    trace = json.loads(trace_json)
    assert trace["terminal"] == "target_met"
    assert pruned.complexity()["totals"]["flops"] <= base // 2
    assert pruned.validate() == []

    compute, access, total = pk.energy_estimate(10**9, 1 << 20)
    assert (compute, access) == (2.3e9, 640.0)
    assert total == compute + access

    for bad in (lambda: pk.Graph.zoo("nope"), lambda: g.remove_filters("conv1", {99})):
        try:
            bad()
        except (KeyError, ValueError):
            pass
        else:
            raise AssertionError("expected an error")

    print(f"smoke test ok: {len(trace['steps'])} pruning steps, {pruned!r}")


if __name__ == "__main__":
    main()
