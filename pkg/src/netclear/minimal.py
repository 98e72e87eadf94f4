"""Minimal clearing state computation.

The driver injects external assets one bank at a time. While a chosen bank can
still reach a flooded region (a non-singleton sink SCC of the active graph),
payments inside that region are raised along the component's circulation
eigenvector until a payment-function border binds. Once no flooded region is
reachable, the response of the whole reachable set to a small injection is
linear; the slopes come from one exact linear solve and the injection advances
to the next border or the bank's remaining budget, whichever is closer.

Default costs are removed up front by network surgery: each defaulting bank
gets a splitter that diverts the haircut share of its incoming payments to a
sink. When such a bank turns solvent the gadget is retired and its outgoing
claims are replaced by external-asset injections at the former creditors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from . import errors
from .clearing import ClearingState
from .graphs import active_graph, condense, find_flood_component, reachable_from
from .linalg import solve_linear_system, unit_left_nullspace
from .model import (
    Bank,
    Claim,
    FinancialNetwork,
    assemble,
    make_proportional,
)
from .rationals import ONE, ZERO


@dataclass(frozen=True)
class FloodStep:
    component: frozenset[str]
    direction: dict[str, Fraction]  # circulation eigenvector, max entry 1
    scale: Fraction  # largest multiple before a border binds


@dataclass(frozen=True)
class IncreaseStep:
    source: str
    slopes: dict[str, Fraction]  # asset response per unit of injection
    delta: Fraction  # injected amount


@dataclass
class AdjustedNetwork:
    """Working bundle for the driver: the surgically adjusted network plus the
    bookkeeping that ties it back to the original."""

    network: FinancialNetwork
    original: FinancialNetwork
    auxiliary_map: dict[str, tuple[str, str]]  # original id -> (splitter, sink)
    original_d: frozenset[str]
    targets: dict[str, Fraction]  # external assets to inject, per working bank
    injected: dict[str, Fraction]  # externals injected so far
    rewired: set[str] = field(default_factory=set)
    setup_removed: dict[str, tuple[Claim, ...]] = field(default_factory=dict)

    def collector(self, original_id: str) -> str:
        """Working bank that receives the original in-claims of a bank."""
        pair = self.auxiliary_map.get(original_id)
        return pair[0] if pair is not None and pair[0] in self.network.banks else original_id


def _fresh_id(base: str, taken) -> str:
    candidate = base
    while candidate in taken:
        candidate += "_"
    return candidate


def adjust_default_cost(net: FinancialNetwork) -> AdjustedNetwork:
    """Lemma-style surgery replacing default costs with splitter gadgets.

    Banks that can actually default (haircut rates below 1 and positive
    out-liabilities) get their external assets scaled by alpha and their
    incoming claims routed through a proportional splitter that sends the
    (1 - beta) share to a sink. Banks with both rates zero pay nothing while
    insolvent, so their out-claims are simply dropped. Networks without
    effective default cost are returned unchanged.
    """
    effective_d = frozenset(
        v
        for v, bank in net.banks.items()
        if (bank.alpha != 1 or bank.beta != 1)
        and (net.total_out(v) is None or net.total_out(v) > 0)
    )
    if not effective_d:
        targets = {v: net.bank(v).external_assets for v in net.bank_ids()}
        return AdjustedNetwork(
            network=net,
            original=net,
            auxiliary_map={},
            original_d=effective_d,
            targets=targets,
            injected={v: ZERO for v in net.bank_ids()},
        )

    taken = set(net.bank_ids())
    aux_map: dict[str, tuple[str, str]] = {}
    redirect: dict[str, str] = {}
    banks: list[Bank] = []
    setup_removed: dict[str, tuple[Claim, ...]] = {}
    targets: dict[str, Fraction] = {}

    for v, bank in net.banks.items():
        if v in effective_d:
            if bank.alpha == 0 and bank.beta == 0:
                setup_removed[v] = tuple(net.out_claims(v))
                target = ZERO
            else:
                splitter = _fresh_id(f"{v}__s", taken)
                taken.add(splitter)
                sink = _fresh_id(f"{v}__t", taken)
                taken.add(sink)
                aux_map[v] = (splitter, sink)
                redirect[v] = splitter
                target = bank.alpha * bank.external_assets
            banks.append(Bank(v, target, ONE, ONE))
        else:
            target = bank.external_assets
            banks.append(Bank(v, target, ONE, ONE))
        targets[v] = target

    claims: list[Claim] = []
    dropped = {claim.pair for removed in setup_removed.values() for claim in removed}
    for claim in net.claims:
        if claim.pair in dropped:
            continue
        creditor = redirect.get(claim.creditor, claim.creditor)
        claims.append(Claim(claim.debtor, creditor, claim.liability, claim.payment))

    for v, (splitter, sink) in aux_map.items():
        bank = net.bank(v)
        total = net.total_out(v)
        banks.append(Bank(splitter, ZERO, ONE, ONE))
        banks.append(Bank(sink, ZERO, ONE, ONE))
        targets[splitter] = ZERO
        targets[sink] = ZERO
        split = {}
        if bank.beta < 1:
            split[sink] = (1 - bank.beta) * total
        if bank.beta > 0:
            split[v] = bank.beta * total
        functions = make_proportional(split)
        for creditor, liability in split.items():
            claims.append(Claim(splitter, creditor, liability, functions[creditor]))

    work = assemble(banks, claims)
    return AdjustedNetwork(
        network=work,
        original=net,
        auxiliary_map=aux_map,
        original_d=effective_d,
        targets=targets,
        injected={b.id: ZERO for b in banks},
        setup_removed=setup_removed,
    )


def original_inflow(adj: AdjustedNetwork, assets: dict[str, Fraction], u: str) -> Fraction:
    """Incoming payments of ``u`` in the original network, valued at the
    current working state: rewired debtors pay their full liability, debtors
    silenced at setup pay nothing until rewired, everyone else pays their
    current payment-function value."""
    total = ZERO
    for claim in adj.original.in_claims(u):
        debtor = claim.debtor
        if debtor in adj.rewired:
            total += claim.liability
        elif debtor in adj.setup_removed:
            continue
        else:
            total += claim.payment.value_at(assets[debtor])
    return total


def original_solvent(adj: AdjustedNetwork, assets: dict[str, Fraction], u: str) -> bool:
    total_out = adj.original.total_out(u)
    ext = adj.original.bank(u).external_assets
    return ext + original_inflow(adj, assets, u) >= total_out


def rewire_solvent_bank(
    adj: AdjustedNetwork, assets: dict[str, Fraction], u: str
) -> dict[str, Fraction]:
    """Replace the out-claims of a solvent defaulting bank by external-asset
    injections at its creditors and retire its splitter gadget. Mutates
    ``adj`` and returns the consistent new working state."""
    if u not in adj.original_d or u in adj.rewired:
        raise errors.NotSolventError(f"{u!r} is not an unrewired defaulting bank")
    if not original_solvent(adj, assets, u):
        raise errors.NotSolventError(f"{u!r} is not solvent in the original network")

    work = adj.network
    assets = dict(assets)
    removed_pairs: set[tuple[str, str]] = set()

    if u in adj.setup_removed:
        # Out-claims were dropped at setup and paid nothing so far: credit the
        # full liability as a target; nothing was injected yet.
        for claim in adj.setup_removed[u]:
            creditor = adj.collector(claim.creditor)
            adj.targets[creditor] += claim.liability
    else:
        for claim in work.out_claims(u):
            paid = claim.payment.value_at(assets[u])
            adj.targets[claim.creditor] += claim.liability
            adj.injected[claim.creditor] += paid
            removed_pairs.add(claim.pair)

    banks = {v: b for v, b in work.banks.items()}
    claims = [c for c in work.claims if c.pair not in removed_pairs]

    pair = adj.auxiliary_map.get(u)
    if pair is not None:
        splitter, sink = pair
        ext = adj.original.bank(u).external_assets
        adj.targets[u] = ext + adj.targets.pop(splitter)
        adj.injected[u] = ext + adj.injected.pop(splitter)
        adj.targets.pop(sink, None)
        adj.injected.pop(sink, None)
        rerouted = []
        for claim in claims:
            if claim.debtor in (splitter, sink):
                continue
            if claim.creditor == splitter:
                rerouted.append(Claim(claim.debtor, u, claim.liability, claim.payment))
            else:
                rerouted.append(claim)
        claims = rerouted
        del banks[splitter]
        del banks[sink]
        assets.pop(splitter, None)
        assets.pop(sink, None)
    else:
        # alpha = beta = 0 bank: it was inert so far; from now on it simply
        # accumulates its full unreduced assets.
        ext = adj.original.bank(u).external_assets
        adj.targets[u] += ext
        adj.injected[u] += ext

    adj.rewired.add(u)
    adj.network = assemble(banks.values(), claims)
    inflow = ZERO
    for claim in adj.network.in_claims(u):
        inflow += claim.payment.value_at(assets[claim.debtor])
    assets[u] = adj.injected[u] + inflow
    return assets


def solve_flood_step(
    net: FinancialNetwork, state, component: frozenset[str]
) -> FloodStep:
    """Circulation direction and largest feasible scale for flooding a
    non-singleton sink SCC of the active graph."""
    members = sorted(component)
    index = {v: i for i, v in enumerate(members)}
    n = len(members)
    matrix = [[ZERO] * n for _ in range(n)]
    for v in members:
        assets = state[v]
        for claim in net.out_claims(v):
            if claim.creditor in index:
                matrix[index[v]][index[claim.creditor]] = claim.payment.slope_at(assets)
    direction_vec = unit_left_nullspace(matrix)
    direction = {v: direction_vec[index[v]] for v in members}

    scale: Fraction | None = None
    for v in members:
        d_v = direction[v]
        if d_v <= 0:
            continue
        assets = state[v]
        for claim in net.out_claims(v):
            if claim.payment.slope_at(assets) <= 0:
                continue
            delta = claim.payment.next_border_delta(assets)
            if delta is None:
                continue
            ratio = delta / d_v
            if scale is None or ratio < scale:
                scale = ratio
    if scale is None:
        raise errors.InternalInvariantError(
            "flood component has no border ahead; component was not floodable"
        )
    return FloodStep(component=component, direction=direction, scale=scale)


def solve_increase_step(
    net: FinancialNetwork, state, v: str, budget: Fraction
) -> IncreaseStep:
    """Linear response of the minimal clearing state to an injection at ``v``,
    valid while no reachable flooded region exists. The step size is capped by
    the budget and by the nearest payment-function border along the response
    slopes."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    g = active_graph(net, state)
    reach = sorted(reachable_from(g, v))
    index = {u: i for i, u in enumerate(reach)}
    n = len(reach)
    # Rows encode s_x = e_v[x] + sum over active in-edges (z, x) of m * s_z,
    # i.e. the column form (I - M^T) s = e_v of the row-vector system.
    matrix = [[ONE if i == j else ZERO for j in range(n)] for i in range(n)]
    for u in reach:
        assets = state[u]
        for claim in g.active_out(u):
            if claim.creditor in index:
                matrix[index[claim.creditor]][index[u]] -= claim.payment.slope_at(assets)
    rhs = [ZERO] * n
    rhs[index[v]] = ONE
    solution = solve_linear_system(matrix, rhs)
    if solution is None:
        raise errors.InternalInvariantError(
            "singular response system despite no reachable flood"
        )
    slopes = {u: solution[index[u]] for u in reach}

    delta = budget
    for u in reach:
        s_u = slopes[u]
        if s_u <= 0:
            continue
        assets = state[u]
        for claim in g.active_out(u):
            border = claim.payment.next_border_delta(assets)
            if border is None:
                continue
            ratio = border / s_u
            if ratio < delta:
                delta = ratio
    return IncreaseStep(source=v, slopes=slopes, delta=delta)


@dataclass(frozen=True)
class MinClearingRun:
    state: ClearingState
    flood_steps: tuple[FloodStep, ...]
    increase_steps: tuple[IncreaseStep, ...]

    @property
    def step_count(self) -> int:
        return len(self.flood_steps) + len(self.increase_steps)


def run_min_clearing(net: FinancialNetwork, check_invariant: bool = False) -> MinClearingRun:
    """Full driver; returns the minimal clearing state plus the step trace.

    With ``check_invariant`` the working state is verified to be an exact
    fixed point of the asset map (w.r.t. the injected externals) after every
    step; test suites enable this.
    """
    adj = adjust_default_cost(net)
    assets: dict[str, Fraction] = {v: ZERO for v in adj.network.bank_ids()}
    floods: list[FloodStep] = []
    increases: list[IncreaseStep] = []

    def verify() -> None:
        if not check_invariant:
            return
        from .clearing import is_clearing_state

        check = is_clearing_state(adj.network, assets, externals=adj.injected)
        if not check.ok:
            raise errors.InternalInvariantError(
                f"working state lost the fixed-point invariant: {check.violations}"
            )

    def settle_defaulters() -> None:
        nonlocal assets
        changed = True
        while changed:
            changed = False
            for u in sorted(adj.original_d - adj.rewired):
                if original_solvent(adj, assets, u):
                    assets = rewire_solvent_bank(adj, assets, u)
                    changed = True

    settle_defaulters()
    verify()
    while True:
        source = next(
            (
                v
                for v in sorted(adj.targets)
                if adj.injected[v] < adj.targets[v]
            ),
            None,
        )
        if source is None:
            break

        # A rewiring cascade can retire the selected bank itself (when it is
        # a splitter whose owner turns solvent); re-pick the source then.
        while source in adj.targets:
            g = active_graph(adj.network, assets)
            cond = condense(g)
            component = find_flood_component(g, cond, source)
            if component is None:
                break
            step = solve_flood_step(adj.network, assets, component)
            floods.append(step)
            for member, d in step.direction.items():
                assets[member] += step.scale * d
            settle_defaulters()
            verify()

        if source not in adj.targets:
            continue
        budget = adj.targets[source] - adj.injected[source]
        if budget <= 0:
            continue  # a rewire settled this bank's deficit meanwhile
        step = solve_increase_step(adj.network, assets, source, budget)
        increases.append(step)
        adj.injected[source] += step.delta
        for u, s_u in step.slopes.items():
            if s_u:
                assets[u] += step.delta * s_u
        settle_defaulters()
        verify()

    # Project back to the original banks through the asset axioms.
    final: dict[str, Fraction] = {}
    for u in net.bank_ids():
        bank = net.bank(u)
        if u in adj.original_d:
            inflow = original_inflow(adj, assets, u)
            unreduced = bank.external_assets + inflow
            if unreduced >= net.total_out(u):
                final[u] = unreduced
            else:
                final[u] = bank.alpha * bank.external_assets + bank.beta * inflow
        else:
            final[u] = assets[u]
    return MinClearingRun(
        state=ClearingState(final),
        flood_steps=tuple(floods),
        increase_steps=tuple(increases),
    )


def compute_min_clearing(net: FinancialNetwork) -> ClearingState:
    return run_min_clearing(net).state
