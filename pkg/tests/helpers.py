"""Randomized harnesses shared by the unit tests and the acceptance suite."""

import itertools

import numpy as np

from csvrptw.core import QUADRATIC, expected_route_penalty, route_cost
from csvrptw.datagen import KINDS
from csvrptw.learn import MlpModel, init_mlp, mlp_loss_and_grads
from csvrptw.oracle import min_reduced_cost, random_instance, random_scenarios
from csvrptw.pricing import (Duals, build_rcsp_bound, extend_label, knapsack_bound, reduced_cost, root_label,
                             shortest_min_times)


def random_duals(inst, rng, scale=1.5):
    """Duals large enough that negative reduced-cost routes usually exist."""
    gamma = np.r_[0.0, rng.uniform(0.3, scale, inst.n_customers) * 2 * inst.cost[0, 1:]]
    return Duals(gamma, -rng.uniform(0.0, 5.0))


def random_case(seed, n_max=7):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, n_max + 1))
    inst = random_instance(n, int(rng.integers(2, 4)), seed)
    scen = random_scenarios(inst, int(rng.choice([1, 2, 5])), KINDS[seed % 3], seed)
    return rng, inst, scen, random_duals(inst, rng)


def random_label(inst, scen, duals, rng, pen=QUADRATIC):
    """A label for a random capacity-feasible elementary prefix."""
    label = root_label(duals, scen)
    for j in rng.permutation(inst.n_customers) + 1:
        if rng.uniform() < 0.35 and label.path:
            break
        nxt = extend_label(label, int(j), scen, duals, pen, inst)
        if nxt is not None:
            label = nxt
    return label


def completions(inst, label):
    """All capacity-feasible orderings of subsets of the unvisited customers (including the empty one)."""
    free = [c for c in inst.customers if c not in label.visited]
    room = inst.capacity - label.load
    yield ()
    for size in range(1, len(free) + 1):
        for subset in itertools.combinations(free, size):
            if inst.demand[list(subset)].sum() > room + 1e-9:
                continue
            yield from itertools.permutations(subset)


def bound_value(kind, inst, scen, duals, label, pen=QUADRATIC, variant="tight"):
    if kind == "rcsp":
        b = build_rcsp_bound(inst, duals, pen, scen.times, variant=variant)
        return b.bound(label.node, label.tau, inst.capacity - label.load)
    return knapsack_bound(label, duals, shortest_min_times(scen.times), pen, inst)


def soundness_violations(kind, n_pairs, variant="tight", seed0=0, exhaustive=False):
    """Count (label, completion) pairs where the completed reduced cost undercuts label + bound."""
    violations, checked, seed = 0, 0, seed0
    while checked < n_pairs:
        rng, inst, scen, duals = random_case(seed)
        seed += 1
        label = random_label(inst, scen, duals, rng)
        if not label.path:
            continue
        b = bound_value(kind, inst, scen, duals, label, variant=variant)
        comps = list(completions(inst, label))
        picks = comps if exhaustive else [comps[int(rng.integers(len(comps)))]]
        for comp in picks:
            full = reduced_cost(label.path + comp, duals, scen, QUADRATIC, inst)
            checked += 1
            if full < label.cbar + b - 1e-6:
                violations += 1
    return violations, checked


def oracle_min(inst, scen, duals, pen=QUADRATIC):
    return min_reduced_cost(inst, lambda r: route_cost(inst, r) + expected_route_penalty(r, scen, pen, inst), duals)


def finite_difference_check(model: MlpModel, Y, target, l2, h=1e-6):
    _, gW, gb = mlp_loss_and_grads(model, Y, target, l2)
    worst = 0.0
    for params, grads in ((model.weights, gW), (model.biases, gb)):
        for a, g in zip(params, grads):
            flat, gflat = a.reshape(-1), g.reshape(-1)
            for k in range(flat.size):
                old = flat[k]
                flat[k] = old + h
                up = mlp_loss_and_grads(model, Y, target, l2)[0]
                flat[k] = old - h
                down = mlp_loss_and_grads(model, Y, target, l2)[0]
                flat[k] = old
                fd = (up - down) / (2 * h)
                worst = max(worst, abs(fd - gflat[k]) / max(abs(fd), abs(gflat[k]), 1e-6))
    return worst


def frozen_batch():
    rng = np.random.default_rng(12345)
    model = init_mlp(4, (6, 5), seed=3)
    for b in model.biases:
        b[:] = rng.normal(scale=0.1, size=b.shape)
    Y = rng.normal(size=(3, 4))
    target = np.abs(rng.normal(size=3)) * 2
    return model, Y, target
