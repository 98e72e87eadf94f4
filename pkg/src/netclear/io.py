"""Network document parsing and result serialization.

Networks travel as JSON documents with ``format_version`` "1". Exact numbers
are written as integers or strings ("3", "1/2", "0.25"); JSON float literals
are rejected so no value is silently routed through binary floating point.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import IO

from . import model
from .clearing import ClearingState, payments
from .errors import ParseError
from .lattice import RangeSpec
from .model import FinancialNetwork
from .rationals import decimal_str, exact_str, parse_exact

FORMAT_VERSION = "1"
SOLVER_VERSION = "0.1.0"

_BANK_FIELDS = {"id", "external_assets", "alpha", "beta"}
_CLAIM_FIELDS = {"debtor", "creditor", "liability"}
_SCHEME_FIELDS = {
    model.PROPORTIONAL: {"type"},
    model.EDGE_RANKING: {"type", "order"},
    model.PRIORITY_PROPORTIONAL: {"type", "classes"},
    model.PIECEWISE: {"type", "edges"},
}
_PIECEWISE_EDGE_FIELDS = {"creditor", "borders", "slopes"}
_TARGET_FIELDS = {"bank", "lo", "hi"}


def _reject_float(text: str):
    raise ParseError(
        f"float literal {text!r}: write non-integers as strings, e.g. \"1/2\""
    )


def _load_json(source) -> dict:
    """Load a document from a path, an open file, or a literal JSON string
    (strings starting with ``{`` are treated as content, not paths)."""
    try:
        if isinstance(source, str) and source.lstrip().startswith("{"):
            return json.loads(source, parse_float=_reject_float)
        if hasattr(source, "read"):
            return json.load(source, parse_float=_reject_float)
        with open(source, "r", encoding="utf-8") as handle:
            return json.load(handle, parse_float=_reject_float)
    except ParseError:
        raise
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"cannot read {source!r}: {exc}") from exc


def _check_fields(obj: dict, allowed: set, context: str) -> None:
    if not isinstance(obj, dict):
        raise ParseError("expected an object", context)
    unknown = set(obj) - allowed
    if unknown:
        raise ParseError(f"unknown fields {sorted(unknown)}", context)


def _number(obj, field: str, context: str, default=None) -> Fraction | int | str:
    if field not in obj:
        if default is None:
            raise ParseError(f"missing field {field!r}", context)
        return default
    value = obj[field]
    if not isinstance(value, (int, str)):
        raise ParseError(f"{field!r} must be an integer or exact string", context)
    try:
        parse_exact(value)
    except (ValueError, TypeError) as exc:
        raise ParseError(str(exc), f"{context}.{field}") from exc
    return value


def parse_network(source) -> FinancialNetwork:
    """Parse and validate a network document from a path, file, or string."""
    doc = _load_json(source)
    _check_fields(doc, {"format_version", "banks", "payment_schemes", "claims"}, "document")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ParseError(
            f"unsupported format_version {version!r}, expected {FORMAT_VERSION!r}"
        )
    banks = doc.get("banks", [])
    if not isinstance(banks, list) or not banks:
        raise ParseError("at least one bank is required", "banks")
    raw_banks = []
    for i, entry in enumerate(banks):
        context = f"banks[{i}]"
        _check_fields(entry, _BANK_FIELDS, context)
        if not isinstance(entry.get("id"), str):
            raise ParseError("bank id must be a string", context)
        raw_banks.append(
            {
                "id": entry["id"],
                "external_assets": _number(entry, "external_assets", context, default=0),
                "alpha": _number(entry, "alpha", context, default="1"),
                "beta": _number(entry, "beta", context, default="1"),
            }
        )

    raw_claims = []
    for i, entry in enumerate(doc.get("claims", [])):
        context = f"claims[{i}]"
        _check_fields(entry, _CLAIM_FIELDS, context)
        for field in ("debtor", "creditor"):
            if not isinstance(entry.get(field), str):
                raise ParseError(f"{field!r} must be a bank id string", context)
        raw_claims.append(
            {
                "debtor": entry["debtor"],
                "creditor": entry["creditor"],
                "liability": _number(entry, "liability", context),
            }
        )

    schemes_doc = doc.get("payment_schemes", {})
    if not isinstance(schemes_doc, dict):
        raise ParseError("payment_schemes must map bank ids to schemes", "payment_schemes")
    raw_schemes = {}
    for bank_id, scheme in schemes_doc.items():
        context = f"payment_schemes[{bank_id!r}]"
        if not isinstance(scheme, dict) or "type" not in scheme:
            raise ParseError("scheme must be an object with a 'type'", context)
        kind = scheme["type"]
        allowed = _SCHEME_FIELDS.get(kind)
        if allowed is None:
            raise ParseError(f"unknown scheme type {kind!r}", context)
        _check_fields(scheme, allowed, context)
        if kind == model.PIECEWISE:
            for j, edge in enumerate(scheme.get("edges", [])):
                edge_context = f"{context}.edges[{j}]"
                _check_fields(edge, _PIECEWISE_EDGE_FIELDS, edge_context)
                for field in ("borders", "slopes"):
                    values = edge.get(field)
                    if not isinstance(values, list):
                        raise ParseError(f"{field!r} must be a list", edge_context)
                    for value in values:
                        if not isinstance(value, (int, str)):
                            raise ParseError(
                                f"{field!r} entries must be integers or exact strings",
                                edge_context,
                            )
        raw_schemes[bank_id] = scheme

    return model.validate_network(
        {"banks": raw_banks, "claims": raw_claims, "payment_schemes": raw_schemes}
    )


def serialize_network(net: FinancialNetwork) -> dict:
    """Document form of a network; parse(serialize(net)) round-trips."""
    banks = []
    for v in net.bank_ids():
        bank = net.bank(v)
        entry = {"id": v, "external_assets": exact_str(bank.external_assets)}
        if bank.alpha != 1:
            entry["alpha"] = exact_str(bank.alpha)
        if bank.beta != 1:
            entry["beta"] = exact_str(bank.beta)
        banks.append(entry)
    claims = []
    schemes: dict[str, dict] = {}
    for claim in net.claims:
        if claim.liability is None:
            raise ValueError("internal networks with unbounded claims do not serialize")
        claims.append(
            {
                "debtor": claim.debtor,
                "creditor": claim.creditor,
                "liability": exact_str(claim.liability),
            }
        )
    for v, descriptor in net.schemes.items():
        kind = descriptor[0]
        if kind == model.PROPORTIONAL:
            schemes[v] = {"type": kind}
        elif kind == model.EDGE_RANKING:
            schemes[v] = {"type": kind, "order": list(descriptor[1])}
        elif kind == model.PRIORITY_PROPORTIONAL:
            schemes[v] = {"type": kind, "classes": [list(c) for c in descriptor[1]]}
        else:
            schemes[v] = {
                "type": model.PIECEWISE,
                "edges": [
                    {
                        "creditor": claim.creditor,
                        "borders": [exact_str(x) for x in claim.payment.borders],
                        "slopes": [exact_str(m) for m in claim.payment.slopes],
                    }
                    for claim in net.out_claims(v)
                ],
            }
    return {
        "format_version": FORMAT_VERSION,
        "banks": banks,
        "payment_schemes": schemes,
        "claims": claims,
    }


def parse_targets(source, net: FinancialNetwork) -> RangeSpec:
    """Parse a range-targets document: ``{"targets": [{bank, lo, hi}]}``."""
    doc = _load_json(source)
    _check_fields(doc, {"targets"}, "targets document")
    targets = {}
    for i, entry in enumerate(doc.get("targets", [])):
        context = f"targets[{i}]"
        _check_fields(entry, _TARGET_FIELDS, context)
        if not isinstance(entry.get("bank"), str):
            raise ParseError("'bank' must be a bank id string", context)
        lo = _number(entry, "lo", context)
        hi = _number(entry, "hi", context)
        targets[entry["bank"]] = (lo, hi)
    return RangeSpec.build(net, targets)


def _value_entry(value: Fraction) -> dict:
    return {"exact": exact_str(value), "decimal": decimal_str(value)}


def result_document(
    operation: str,
    net: FinancialNetwork,
    state: ClearingState | None,
    *,
    step_count: int = 0,
    flood_count: int = 0,
    extra: dict | None = None,
) -> dict:
    """ResultDocument with exact and display-decimal fields; deterministic."""
    assets = {}
    payment_rows = []
    if state is not None:
        assets = {v: _value_entry(state[v]) for v in sorted(net.bank_ids())}
        for (debtor, creditor), value in sorted(payments(net, state).items()):
            payment_rows.append(
                {"debtor": debtor, "creditor": creditor, **_value_entry(value)}
            )
    metadata = {
        "operation": operation,
        "step_count": step_count,
        "flood_count": flood_count,
        "solver_version": SOLVER_VERSION,
    }
    if extra:
        metadata.update(extra)
    return {"assets": assets, "payments": payment_rows, "metadata": metadata}


def dump_document(doc: dict, stream: IO | None = None) -> str:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if stream is not None:
        stream.write(text)
    return text
