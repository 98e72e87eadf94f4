"""The clearing fixed-point map, state verification, and iteration oracles."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from fractions import Fraction

from . import errors
from .model import Claim, FinancialNetwork
from .rationals import ZERO


class ClearingState(Mapping):
    """Immutable asset vector; payments are always derived from it."""

    __slots__ = ("_assets",)

    def __init__(self, assets: Mapping[str, Fraction]):
        self._assets = dict(assets)

    def __getitem__(self, bank_id: str) -> Fraction:
        try:
            return self._assets[bank_id]
        except KeyError:
            raise errors.UnknownBankError(bank_id) from None

    def __iter__(self):
        return iter(self._assets)

    def __len__(self):
        return len(self._assets)

    def __repr__(self):
        inner = ", ".join(f"{k}: {v}" for k, v in self._assets.items())
        return f"ClearingState({{{inner}}})"

    def as_dict(self) -> dict[str, Fraction]:
        return dict(self._assets)


def payment(net: FinancialNetwork, state: Mapping, claim: Claim) -> Fraction:
    return claim.payment.value_at(state[claim.debtor])


def payments(net: FinancialNetwork, state: Mapping) -> dict[tuple[str, str], Fraction]:
    return {c.pair: c.payment.value_at(state[c.debtor]) for c in net.claims}


def incoming_assets(net: FinancialNetwork, state: Mapping, v: str, externals=None) -> Fraction:
    ext = net.bank(v).external_assets if externals is None else externals[v]
    total = ext
    for claim in net.in_claims(v):
        total += claim.payment.value_at(state[claim.debtor])
    return total


def reduced_assets(net: FinancialNetwork, state: Mapping, v: str, externals=None) -> Fraction:
    bank = net.bank(v)
    ext = bank.external_assets if externals is None else externals[v]
    inflow = ZERO
    for claim in net.in_claims(v):
        inflow += claim.payment.value_at(state[claim.debtor])
    return bank.alpha * ext + bank.beta * inflow


def phi(net: FinancialNetwork, state: Mapping, externals=None) -> ClearingState:
    """One application of the asset-axiom map: a bank keeps its full incoming
    assets when they cover its liabilities, and the haircut assets otherwise."""
    result: dict[str, Fraction] = {}
    for v, bank in net.banks.items():
        ext = bank.external_assets if externals is None else externals[v]
        inflow = ZERO
        for claim in net.in_claims(v):
            inflow += claim.payment.value_at(state[claim.debtor])
        unreduced = ext + inflow
        total_out = net.total_out(v)
        if total_out is not None and unreduced >= total_out:
            result[v] = unreduced
        else:
            result[v] = bank.alpha * ext + bank.beta * inflow
    return ClearingState(result)


@dataclass(frozen=True)
class ClearingCheck:
    ok: bool
    violations: tuple[tuple[str, Fraction, Fraction], ...]  # (bank, phi value, state value)

    def __bool__(self):
        return self.ok


def is_clearing_state(net: FinancialNetwork, state: Mapping, externals=None) -> ClearingCheck:
    image = phi(net, state, externals)
    bad = tuple(
        (v, image[v], state[v]) for v in net.bank_ids() if image[v] != state[v]
    )
    return ClearingCheck(ok=not bad, violations=bad)


@dataclass(frozen=True)
class IterationResult:
    state: ClearingState
    converged: bool
    steps: int


def bottom_iterate(net: FinancialNetwork, max_steps: int) -> IterationResult:
    """Iterate the asset map from the all-zero vector.

    Iterates are monotone non-decreasing and stay below the minimal clearing
    state. Convergence is tested exactly; networks with insolvent cycles
    typically converge only in the limit and are reported honestly as
    non-converged.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    current = ClearingState({v: ZERO for v in net.bank_ids()})
    for step in range(1, max_steps + 1):
        nxt = phi(net, current)
        if nxt.as_dict() == current.as_dict():
            return IterationResult(current, True, step - 1)
        current = nxt
    return IterationResult(current, False, max_steps)


def top_iterate(
    net: FinancialNetwork, max_steps: int, allow_default_cost: bool = False
) -> IterationResult:
    """Iterate the asset map from the lattice top, as a verification oracle.

    Restricted to networks without default cost: the solvency case split makes
    the map discontinuous from above otherwise, so top iteration is unreliable
    there (pass ``allow_default_cost=True`` to override for experiments).
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    if net.has_default_cost() and not allow_default_cost:
        raise errors.DefaultCostUnsupportedError(
            "top iteration is a no-default-cost oracle"
        )
    top: dict[str, Fraction] = {}
    for v in net.bank_ids():
        total_in = net.total_in(v)
        if total_in is None:
            raise ValueError("top iteration needs finite in-liabilities")
        top[v] = net.bank(v).external_assets + total_in
    current = ClearingState(top)
    for step in range(1, max_steps + 1):
        nxt = phi(net, current)
        if nxt.as_dict() == current.as_dict():
            return IterationResult(current, True, step - 1)
        current = nxt
    return IterationResult(current, False, max_steps)
