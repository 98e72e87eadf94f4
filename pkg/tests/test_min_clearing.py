"""The minimal-clearing driver: golden examples, surgery, steps, invariants."""

import random
from fractions import Fraction as F

import pytest

from netclear import (
    adjust_default_cost,
    bottom_iterate,
    build_network,
    compute_min_clearing,
    is_clearing_state,
    payments,
    rewire_solvent_bank,
    run_min_clearing,
    solve_flood_step,
    solve_increase_step,
    top_iterate,
)
from netclear.errors import NotSolventError

from corpus import random_network


def example1():
    return build_network(
        banks=[("u", 1), ("v", 0), ("w", 0)],
        claims=[("u", "v", 1), ("u", "w", 1), ("w", "u", 1)],
    )


def example2():
    return build_network(
        banks=[("v", 1, "1/2", "1/2"), ("w", 1, "1/2", "1/2")],
        claims=[("v", "w", 2), ("w", "v", 2)],
    )


def example3():
    return build_network(
        banks=[("u", 1), ("v", 2), ("w", 0), ("y", 0)],
        claims=[("u", "v", 2), ("v", "w", 2), ("v", "y", 2), ("y", "v", 2)],
        schemes={"v": {"type": "edge_ranking", "order": ["w", "y"]}},
    )


class TestGoldenExamples:
    def test_example1(self):
        run = run_min_clearing(example1(), check_invariant=True)
        assert run.state.as_dict() == {"u": F(2), "v": F(1), "w": F(1)}
        assert all(p == 1 for p in payments(example1(), run.state).values())

    def test_example2(self):
        net = example2()
        run = run_min_clearing(net, check_invariant=True)
        assert run.state.as_dict() == {"v": F(3), "w": F(3)}
        assert all(p == 2 for p in payments(net, run.state).values())

    def test_example3_with_trace(self):
        net = example3()
        run = run_min_clearing(net, check_invariant=True)
        assert run.state.as_dict() == {"u": F(1), "v": F(5), "w": F(2), "y": F(2)}
        assert payments(net, run.state) == {
            ("u", "v"): F(1),
            ("v", "w"): F(2),
            ("v", "y"): F(2),
            ("y", "v"): F(2),
        }
        assert len(run.flood_steps) == 1
        flood = run.flood_steps[0]
        assert flood.component == frozenset({"v", "y"})
        assert flood.scale == 2
        assert flood.direction == {"v": F(1), "y": F(1)}


class TestAdjustDefaultCost:
    def test_identity_without_default_cost(self):
        net = example1()
        adj = adjust_default_cost(net)
        assert adj.network is net
        assert not adj.original_d

    def test_example2_gadgets(self):
        net = example2()
        adj = adjust_default_cost(net)
        assert adj.original_d == {"v", "w"}
        splitter, sink = adj.auxiliary_map["v"]
        assert adj.network.bank(splitter).external_assets == 0
        assert adj.network.claim(splitter, sink).liability == 1
        assert adj.network.claim(splitter, "v").liability == 1
        # v's external target halves, incoming claims rerouted to the splitter
        assert adj.targets["v"] == F(1, 2)
        assert adj.network.claim("w", splitter).liability == 2
        assert not adj.network.has_claim("w", "v")
        for bank in adj.network.banks.values():
            assert bank.alpha == 1 and bank.beta == 1

    def test_zero_rate_bank_loses_out_claims(self):
        net = build_network(
            banks=[("a", 5, 0, 0), ("b", 0), ("c", 0)],
            claims=[("a", "b", 2), ("a", "c", 1), ("b", "c", 1)],
        )
        adj = adjust_default_cost(net)
        assert not adj.network.out_claims("a")
        assert adj.network.has_claim("b", "c")
        assert {c.pair for c in adj.setup_removed["a"]} == {("a", "b"), ("a", "c")}


class TestFloodStep:
    def test_example3_flood(self):
        net = example3()
        state = {"u": F(1), "v": F(2), "w": F(2), "y": F(0)}
        step = solve_flood_step(net, state, frozenset({"v", "y"}))
        assert step.direction == {"v": F(1), "y": F(1)}
        assert step.scale == 2

    def test_symmetric_three_cycle(self):
        net = build_network(
            banks=[("a", 0), ("b", 0), ("c", 0)],
            claims=[("a", "b", 1), ("b", "c", 1), ("c", "a", 1)],
        )
        state = {v: F(0) for v in "abc"}
        step = solve_flood_step(net, state, frozenset("abc"))
        assert step.scale == 1
        assert all(d == 1 for d in step.direction.values())

    def test_scale_binds_at_smallest_border(self):
        # 2-cycle where b also owes an inactive, lower-priority claim: the
        # binding border is b's class boundary at 1, not the cycle liability
        net = build_network(
            banks=[("a", 0), ("b", 0), ("z", 0)],
            claims=[("a", "b", 4), ("b", "a", 1), ("b", "z", 3)],
            schemes={"b": {"type": "edge_ranking", "order": ["a", "z"]}},
        )
        state = {v: F(0) for v in ("a", "b", "z")}
        step = solve_flood_step(net, state, frozenset({"a", "b"}))
        assert step.direction == {"a": F(1), "b": F(1)}
        assert step.scale == 1
        assert step.scale == _line_search_scale(net, state, step)
        after = {v: state[v] + step.scale * step.direction.get(v, F(0)) for v in state}
        assert is_clearing_state(net, after).ok

    def test_scale_matches_line_search_oracle(self):
        rng = random.Random(4321)
        compared = 0
        for _ in range(200):
            net = random_network(rng, max_banks=5, max_external=1, edge_prob=0.7)
            state = compute_min_clearing(net).as_dict()
            from netclear import active_graph, condense

            cond = condense(active_graph(net, state))
            for i, comp in enumerate(cond.components):
                if not cond.is_sink[i] or cond.is_singleton[i]:
                    continue
                step = solve_flood_step(net, state, comp)
                assert step.scale == _line_search_scale(net, state, step)
                compared += 1
        assert compared >= 5

    def test_flood_preserves_clearing(self):
        # mostly cash-free networks so that insolvent cycles survive into the
        # minimal state and stay floodable
        rng = random.Random(9000)
        seen = 0
        for _ in range(300):
            net = random_network(rng, max_banks=5, max_external=1, edge_prob=0.7)
            state = compute_min_clearing(net)
            from netclear import active_graph, condense, find_flood_component

            g = active_graph(net, state)
            cond = condense(g)
            for v in net.bank_ids():
                comp = find_flood_component(g, cond, v)
                if comp is None:
                    continue
                step = solve_flood_step(net, state, comp)
                after = dict(state)
                for member, d in step.direction.items():
                    after[member] += step.scale * d
                assert is_clearing_state(net, after).ok
                seen += 1
                break
        assert seen >= 10


class TestIncreaseStep:
    def test_example3_insert_at_u(self):
        net = example3()
        state = {v: F(0) for v in net.bank_ids()}
        step = solve_increase_step(net, state, "u", F(1))
        assert step.slopes == {"u": F(1), "v": F(1), "w": F(1)}
        assert step.delta == 1

    def test_example3_insert_at_v_hits_breakpoint(self):
        net = example3()
        state = {"u": F(1), "v": F(1), "w": F(1), "y": F(0)}
        step = solve_increase_step(net, state, "v", F(2))
        assert step.delta == 1  # border of (v, w) at assets 2

    def test_no_active_out_edges(self):
        net = example3()
        state = {"u": F(1), "v": F(4), "w": F(2), "y": F(2)}
        step = solve_increase_step(net, state, "v", F(1))
        assert step.slopes == {"v": F(1)}
        assert step.delta == 1


class TestRewiring:
    def test_not_solvent_rejected(self):
        net = example2()
        adj = adjust_default_cost(net)
        state = {v: F(0) for v in adj.network.bank_ids()}
        with pytest.raises(NotSolventError):
            rewire_solvent_bank(adj, state, "v")

    def test_solvent_from_the_start(self):
        # a's external assets already cover its liabilities; with default
        # rates below 1 it still pays in full
        net = build_network(
            banks=[("a", 3, "1/2", "1/2"), ("b", 0)],
            claims=[("a", "b", 2)],
        )
        state = compute_min_clearing(net)
        assert state.as_dict() == {"a": F(3), "b": F(2)}

    def test_splitter_retired_while_serving_as_source(self):
        # a's rewiring leaves an injection target on z's splitter; flooding
        # the {z__s, z, e} cycle from that splitter makes z solvent, which
        # retires the splitter mid-iteration. The driver must re-pick.
        net = build_network(
            banks=[("a", 1, "1/2", 1), ("z", 0, "1/2", 1), ("e", 0)],
            claims=[("a", "z", 1), ("z", "e", 3), ("e", "z", 2)],
        )
        run = run_min_clearing(net, check_invariant=True)
        assert run.state.as_dict() == {"a": F(1), "z": F(3), "e": F(3)}
        assert len(run.flood_steps) == 1
        assert run.flood_steps[0].scale == 2
        assert is_clearing_state(net, run.state).ok

    def test_rewire_matches_bottom_iteration_on_chain(self):
        # default cost only at the solvent head of a 2-bank chain
        net = build_network(
            banks=[("a", 2, "1/2", "1/2"), ("b", 0)],
            claims=[("a", "b", 2)],
        )
        minimal = compute_min_clearing(net)
        oracle = bottom_iterate(net, 10)
        assert oracle.converged
        assert minimal.as_dict() == oracle.state.as_dict()


class TestMinClearingProperties:
    def test_output_is_exact_fixed_point(self):
        rng = random.Random(123)
        for _ in range(150):
            net = random_network(rng, default_cost=rng.random() < 0.5)
            state = compute_min_clearing(net)
            assert is_clearing_state(net, state).ok
            for v in net.bank_ids():  # the lattice box
                assert 0 <= state[v] <= net.bank(v).external_assets + net.total_in(v)

    def test_invariant_enabled_runs(self):
        rng = random.Random(321)
        for _ in range(60):
            net = random_network(rng, default_cost=rng.random() < 0.5)
            run_min_clearing(net, check_invariant=True)

    def test_bounded_by_oracles(self):
        rng = random.Random(456)
        for _ in range(80):
            net = random_network(rng)
            minimal = compute_min_clearing(net)
            below = bottom_iterate(net, 50).state
            above = top_iterate(net, 50).state
            for v in net.bank_ids():
                assert below[v] <= minimal[v] <= above[v]

    def test_monotone_in_external_assets(self):
        rng = random.Random(654)
        for _ in range(60):
            net = random_network(rng, max_banks=5)
            base = compute_min_clearing(net)
            bumped_id = rng.choice(net.bank_ids())
            banks = [
                (
                    v,
                    net.bank(v).external_assets + (1 if v == bumped_id else 0),
                    net.bank(v).alpha,
                    net.bank(v).beta,
                )
                for v in net.bank_ids()
            ]
            claims = [(c.debtor, c.creditor, c.liability) for c in net.claims]
            schemes = {
                v: _scheme_doc(net.schemes[v]) for v in net.schemes
            }
            bumped = build_network(banks, claims, schemes)
            raised = compute_min_clearing(bumped)
            for v in net.bank_ids():
                assert raised[v] >= base[v]
            assert raised[bumped_id] > base[bumped_id]

    def test_minimal_among_all_enumerated_fixed_points(self):
        # exhaustive phase enumeration on tiny default-cost networks: the
        # computed state must sit below every clearing state that exists
        rng = random.Random(777_000)
        enumerated_total = 0
        for _ in range(60):
            net = random_network(
                rng,
                max_banks=3,
                max_liability=3,
                max_external=2,
                default_cost=rng.random() < 0.7,
                alphas=(F(0), F(1, 2), F(1)),
                edge_prob=0.7,
            )
            minimal = compute_min_clearing(net)
            others = _enumerate_fixed_points(net)
            assert others, "enumeration must at least rediscover the minimum"
            assert any(dict(minimal) == other for other in others)
            for other in others:
                for v in net.bank_ids():
                    assert minimal[v] <= other[v]
            enumerated_total += len(others)
        assert enumerated_total >= 60

    def test_step_budget(self):
        # floods + increases stay within 2n + total borders + m
        rng = random.Random(987)
        for _ in range(60):
            net = random_network(rng, default_cost=rng.random() < 0.4)
            run = run_min_clearing(net)
            adj_net = adjust_default_cost(net).network
            n = len(adj_net.bank_ids())
            m = len(adj_net.claims)
            borders = sum(len(c.payment.borders) - 1 for c in adj_net.claims)
            assert run.step_count <= 2 * n + borders + m


def _enumerate_fixed_points(net):
    """All clearing states of a tiny network, by exact phase enumeration.

    Choose a payment segment for every bank and a solvency branch, solve the
    resulting affine system, and keep solutions consistent with the choices.
    Singular systems (free circulations) contribute their box-minimal point.
    Exhaustive for the minimality check as long as no multi-dimensional
    family appears (none do on these corpora).
    """
    from itertools import product

    from netclear.linalg import solve_linear_system, unit_left_nullspace

    ids = net.bank_ids()
    n = len(ids)
    index = {v: i for i, v in enumerate(ids)}
    grids = []
    for v in ids:
        borders = sorted({x for c in net.out_claims(v) for x in c.payment.borders})
        if not borders:
            borders = [F(0)]
        grids.append(borders)

    found = []
    segment_choices = [range(len(g)) for g in grids]
    for segments in product(*segment_choices):
        for branches in product((False, True), repeat=n):
            # affine payment of each claim given the debtor's segment
            matrix = [[F(0)] * n for _ in range(n)]
            constant = [F(0)] * n
            for i, v in enumerate(ids):
                bank = net.bank(v)
                solvent = branches[i]
                scale = F(1) if solvent else bank.beta
                constant[i] = (F(1) if solvent else bank.alpha) * bank.external_assets
                matrix[i][i] = F(1)
                for claim in net.in_claims(v):
                    u = claim.debtor
                    j = index[u]
                    anchor = grids[j][segments[j]]
                    slope = claim.payment.slope_at(anchor)
                    value = claim.payment.value_at(anchor)
                    matrix[i][j] -= scale * slope
                    constant[i] += scale * (value - slope * anchor)

            solution = solve_linear_system(matrix, constant)
            candidates = []
            if solution is not None:
                candidates.append(solution)
            else:
                try:
                    direction = unit_left_nullspace(
                        [[(F(1) if a == b else F(0)) - matrix[b][a] for b in range(n)] for a in range(n)]
                    )
                except Exception:
                    direction = None
                if direction is not None:
                    pinned = [row[:] for row in matrix]
                    rhs = list(constant)
                    pinned[0] = [F(1) if j == 0 else F(0) for j in range(n)]
                    rhs[0] = grids[0][segments[0]]
                    particular = solve_linear_system(pinned, rhs)
                    if particular is not None:
                        ratios = [
                            (grids[i][segments[i]] - particular[i]) / direction[i]
                            for i in range(n)
                            if direction[i] != 0
                        ]
                        if ratios:
                            gamma = max(ratios)
                            candidates.append(
                                [particular[i] + gamma * direction[i] for i in range(n)]
                            )
            for candidate in candidates:
                state = {v: candidate[index[v]] for v in ids}
                if is_clearing_state(net, state).ok:
                    found.append(state)
    return found


def _line_search_scale(net, state, step):
    """Independent maximization of the flood scale: enumerate every candidate
    scale implied by the explicit border lists and keep the largest one under
    which no member's active edge crosses its next border."""
    candidates = set()
    for w in step.component:
        d_w = step.direction[w]
        if d_w <= 0:
            continue
        for claim in net.out_claims(w):
            for border in claim.payment.borders:
                if border > state[w]:
                    candidates.add((border - state[w]) / d_w)

    def feasible(gamma):
        for w in step.component:
            move = gamma * step.direction[w]
            for claim in net.out_claims(w):
                if claim.payment.slope_at(state[w]) <= 0:
                    continue
                delta = claim.payment.next_border_delta(state[w])
                if delta is not None and move > delta:
                    return False
        return True

    return max(g for g in candidates if feasible(g))


def _scheme_doc(descriptor):
    kind = descriptor[0]
    if kind == "proportional":
        return {"type": kind}
    if kind == "edge_ranking":
        return {"type": kind, "order": list(descriptor[1])}
    if kind == "priority_proportional":
        return {"type": kind, "classes": [list(c) for c in descriptor[1]]}
    raise AssertionError(kind)
