"""Claims trading under minimal clearing.

A buyer pays a return out of its external assets for a claim and becomes its
creditor. The returns that strictly improve the seller while leaving the
buyer whole form an interval just above the claim's current payment; its
right end is found by walking the return upward along the exact linear
response of the minimal clearing state, flooding newly formed sink components
and re-solving at every payment-function border.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import errors
from .clearing import ClearingState
from .graphs import active_graph, condense, find_flood_component, reachable_from
from .lattice import compute_max_clearing_flood
from .linalg import solve_linear_system
from .minimal import compute_min_clearing, solve_flood_step
from .model import Bank, Claim, FinancialNetwork, assemble
from .rationals import ONE, ZERO


@dataclass(frozen=True)
class TradeSpec:
    claim: tuple[str, str]  # (debtor, creditor)
    buyer: str
    rho: Fraction


@dataclass(frozen=True)
class TradeResult:
    rho_min: Fraction  # pre-trade payment on the claim
    rho_star: Fraction  # largest creditor-positive return
    post_state: ClearingState  # minimal clearing state at rho_star
    interval: tuple[Fraction, Fraction]  # the half-open interval (rho_min, rho_star]


def _require_no_default_cost(net: FinancialNetwork) -> None:
    if net.has_default_cost():
        raise errors.DefaultCostUnsupportedError(
            "claims trading is defined for networks without default cost"
        )


def _check_trade_shape(net: FinancialNetwork, claim_pair, buyer) -> Claim:
    debtor, creditor = claim_pair
    claim = net.claim(debtor, creditor)
    net.bank(buyer)
    if buyer in (debtor, creditor):
        raise ValueError("the buyer must differ from both claim endpoints")
    if net.has_claim(debtor, buyer):
        raise errors.DuplicateEdgeAfterTradeError(debtor, buyer)
    return claim


def apply_trade(net: FinancialNetwork, spec: TradeSpec) -> FinancialNetwork:
    """Re-target the claim to the buyer and move the return between the
    external assets of buyer and seller; the debtor-side payment function is
    untouched."""
    _require_no_default_cost(net)
    claim = _check_trade_shape(net, spec.claim, spec.buyer)
    debtor, creditor = spec.claim
    if spec.rho < 0:
        raise ValueError("the return must be non-negative")
    cap = min(net.bank(spec.buyer).external_assets, claim.liability)
    if spec.rho > cap:
        raise errors.ReturnExceedsCapError(spec.rho, cap)

    banks = []
    for v, bank in net.banks.items():
        if v == creditor:
            banks.append(Bank(v, bank.external_assets + spec.rho, bank.alpha, bank.beta))
        elif v == spec.buyer:
            banks.append(Bank(v, bank.external_assets - spec.rho, bank.alpha, bank.beta))
        else:
            banks.append(bank)
    claims = [
        Claim(debtor, spec.buyer, claim.liability, claim.payment) if c is claim else c
        for c in net.claims
    ]
    return assemble(banks, claims, dict(net.schemes))


def nonunique_banks(net: FinancialNetwork) -> frozenset[str]:
    """Banks whose minimal and maximal clearing assets differ."""
    _require_no_default_cost(net)
    low = compute_min_clearing(net)
    high = compute_max_clearing_flood(net)
    return frozenset(v for v in net.bank_ids() if low[v] != high[v])


def _flood_closure(net: FinancialNetwork, assets: dict, v: str) -> dict:
    """Fully flood every non-singleton sink SCC reachable from ``v``."""
    assets = dict(assets)
    while True:
        g = active_graph(net, assets)
        cond = condense(g)
        component = find_flood_component(g, cond, v)
        if component is None:
            return assets
        step = solve_flood_step(net, assets, component)
        for member, d in step.direction.items():
            assets[member] += step.scale * d


def _trade_slopes(net: FinancialNetwork, assets: dict, v: str, w: str) -> dict:
    """Response of the minimal clearing state to moving one unit of external
    assets from the buyer ``w`` to the seller ``v``.

    The buyer's outgoing payments are held fixed (at the creditor-positive
    boundary its assets do not move), which makes the system block-triangular:
    solve the injection response on the set reachable from ``v``, then read
    off the buyer's hypothetical drift and use its sign as the stop signal.
    """
    g = active_graph(net, assets)
    reach = sorted(reachable_from(g, v))
    index = {u: i for i, u in enumerate(reach)}
    n = len(reach)
    matrix = [[ONE if i == j else ZERO for j in range(n)] for i in range(n)]
    for u in reach:
        if u == w:
            continue  # buyer out-edges frozen
        for claim in g.active_out(u):
            if claim.creditor in index:
                matrix[index[claim.creditor]][index[u]] -= claim.payment.slope_at(
                    assets[u]
                )
    rhs = [ZERO] * n
    rhs[index[v]] += ONE
    if w in index:
        rhs[index[w]] -= ONE
    solution = solve_linear_system(matrix, rhs)
    if solution is None:
        raise errors.InternalInvariantError(
            "singular trade response system after flood closure"
        )
    slopes = {u: ZERO for u in net.bank_ids()}
    for u in reach:
        slopes[u] = solution[index[u]]
    if w not in index:
        drift = -ONE
        for claim in net.in_claims(w):
            debtor = claim.debtor
            if debtor in index and claim.payment.slope_at(assets[debtor]) > 0:
                slopes_u = slopes[debtor]
                if slopes_u:
                    drift += claim.payment.slope_at(assets[debtor]) * slopes_u
        slopes[w] = drift
    return slopes


def _trade_walk(net: FinancialNetwork, claim_pair, buyer):
    """Shared walk used by the existence test and the optimizer.

    Returns ``(rho_min, rho_star, post_state, base_state)``; when no
    creditor-positive return exists ``rho_star == rho_min`` and ``post_state``
    is the state at ``rho_min``.
    """
    _require_no_default_cost(net)
    claim = _check_trade_shape(net, claim_pair, buyer)
    debtor, v = claim_pair
    w = buyer
    base = compute_min_clearing(net)
    rho_min = claim.payment.value_at(base[debtor])
    cap = min(net.bank(w).external_assets, claim.liability)
    if cap <= rho_min:
        return rho_min, rho_min, base, base

    rho = rho_min
    traded = apply_trade(net, TradeSpec(claim_pair, buyer, rho))
    state = compute_min_clearing(traded).as_dict()
    while True:
        flooded = _flood_closure(traded, state, v)
        slopes = _trade_slopes(traded, flooded, v, w)
        if not (slopes[v] > 0 and slopes[w] == 0):
            break
        state = flooded
        advance = cap - rho
        g = active_graph(traded, state)
        for u in sorted(net.bank_ids()):
            s_u = slopes[u]
            if s_u <= 0 or u == w:
                continue
            for active in g.active_out(u):
                border = active.payment.next_border_delta(state[u])
                if border is None:
                    continue
                ratio = border / s_u
                if ratio < advance:
                    advance = ratio
        for u, s_u in slopes.items():
            if s_u:
                state[u] += advance * s_u
        rho += advance
        traded = apply_trade(net, TradeSpec(claim_pair, buyer, rho))
        if rho == cap:
            break
    return rho_min, rho, ClearingState(state), base


def exists_creditor_positive(
    net: FinancialNetwork, claim_pair, buyer
) -> tuple[bool, str]:
    """Decide whether some return strictly improves the seller while keeping
    the buyer whole; the diagnostic explains the failure."""
    claim = _check_trade_shape(net, claim_pair, buyer)
    _require_no_default_cost(net)
    base = compute_min_clearing(net)
    rho_min = claim.payment.value_at(base[claim_pair[0]])
    cap = min(net.bank(buyer).external_assets, claim.liability)
    if cap <= rho_min:
        return False, (
            f"the return cap {cap} does not exceed the current payment {rho_min}"
        )
    traded = apply_trade(net, TradeSpec(claim_pair, buyer, rho_min))
    state = compute_min_clearing(traded).as_dict()
    flooded = _flood_closure(traded, state, claim_pair[1])
    slopes = _trade_slopes(traded, flooded, claim_pair[1], buyer)
    if slopes[buyer] < 0:
        return False, "the buyer cannot recover any part of a higher return"
    if slopes[claim_pair[1]] <= 0:
        return False, "a higher return does not raise the seller's assets"
    return True, "a higher return raises the seller and leaves the buyer whole"


def optimal_creditor_positive_return(
    net: FinancialNetwork, claim_pair, buyer
) -> TradeResult:
    """Largest creditor-positive return with its post-trade minimal state."""
    rho_min, rho_star, post, base = _trade_walk(net, claim_pair, buyer)
    if rho_star == rho_min:
        raise errors.NoCreditorPositiveTradeError(
            "no return above the current payment improves the seller "
            "without hurting the buyer"
        )
    if post[claim_pair[1]] <= base[claim_pair[1]]:
        raise errors.NoCreditorPositiveTradeError(
            "the seller's assets do not strictly improve"
        )
    return TradeResult(
        rho_min=rho_min,
        rho_star=rho_star,
        post_state=post,
        interval=(rho_min, rho_star),
    )
