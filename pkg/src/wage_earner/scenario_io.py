"""Strict JSON scenario files and dotted-key overrides.

Schema (units in brackets)::

    {
      "market": {"r": 0.04 [1/yr], "mu": [0.07, 0.11] [1/yr], "sigma": [[...]] [1/sqrt(yr)]},
      "mortality": {"form": "gompertz_makeham", "base": 0.001, "log_scale": -9.5, "growth": 0.1}
                   | {"form": "gompertz_makeham", "base": ..., "scale": ..., "growth": ...}
                   | {"form": "piecewise", "knots": [[t, rate], ...]},
      "insurance": {"loading": 1.05} | {"curve": CURVE},
      "income": {"i0": 50000 [$/yr], "growth": 0.03 [1/yr]} | {"curve": CURVE},
      "preferences": {"gamma": -3, "rho": 0.03 [1/yr], "T": 40 [yr]},
      "x0": 100000 [$],
      "grid_steps": 4000
    }

Any market entry may instead be a CURVE: {"t": [...], "values": [...],
"interpolation": "linear" | "monotone_cubic"}. Unknown keys are rejected.
"""

from __future__ import annotations

import copy
import json
import math
from importlib import resources
from pathlib import Path

from .errors import SchemaError
from .market import market_from_dict
from .mortality import GompertzMakeham, mortality_from_dict
from .numerics import Curve
from .solver import (
    DEFAULT_GRID_STEPS,
    CurveIncome,
    CurveInsurance,
    ExponentialIncome,
    HazardLoading,
    Preferences,
    Scenario,
)

_CURVE_KEYS = {"t", "values", "interpolation"}
_TOP_KEYS = {"market", "mortality", "insurance", "income", "preferences", "x0", "grid_steps"}
_REQUIRED = {"market", "mortality", "insurance", "income", "preferences"}


def _line_of(text: str | None, key: str) -> str:
    if not text:
        return ""
    needle = f'"{key}"'
    for n, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return f" (line {n})"
    return ""


class _Checker:
    def __init__(self, text: str | None):
        self.text = text

    def fail(self, path: str, msg: str):
        leaf = path.rsplit(".", 1)[-1]
        raise SchemaError(f"{path}: {msg}{_line_of(self.text, leaf)}")

    def keys(self, doc, path, allowed, required=()):
        if not isinstance(doc, dict):
            self.fail(path, "expected an object")
        for key in doc:
            if key not in allowed:
                self.fail(f"{path}.{key}" if path else key, "unknown key")
        for key in required:
            if key not in doc:
                self.fail(f"{path}.{key}" if path else key, "missing required key")

    def number(self, doc, path):
        if isinstance(doc, bool) or not isinstance(doc, (int, float)) or not math.isfinite(doc):
            self.fail(path, "expected a finite number")
        return float(doc)

    def curve(self, doc, path):
        self.keys(doc, path, _CURVE_KEYS, ("t", "values"))
        return doc


def _validate(doc: dict, text: str | None) -> dict:
    chk = _Checker(text)
    chk.keys(doc, "", _TOP_KEYS, _REQUIRED)

    mkt = doc["market"]
    chk.keys(mkt, "market", {"r", "mu", "sigma"}, ("r", "mu", "sigma"))
    for name in ("r", "mu", "sigma"):
        if isinstance(mkt[name], dict):
            chk.curve(mkt[name], f"market.{name}")

    mort = doc["mortality"]
    if not isinstance(mort, dict):
        chk.fail("mortality", "expected an object")
    form = mort.get("form")
    if form == "gompertz_makeham":
        chk.keys(mort, "mortality", {"form", "base", "scale", "log_scale", "growth"}, ("base", "growth"))
        if ("scale" in mort) == ("log_scale" in mort):
            chk.fail("mortality.scale", "give exactly one of scale or log_scale")
        for k in ("base", "scale", "log_scale", "growth"):
            if k in mort:
                chk.number(mort[k], f"mortality.{k}")
    elif form == "piecewise":
        chk.keys(mort, "mortality", {"form", "knots"}, ("knots",))
    else:
        chk.fail("mortality.form", "expected 'gompertz_makeham' or 'piecewise'")

    ins = doc["insurance"]
    chk.keys(ins, "insurance", {"loading", "curve"})
    if len(ins) != 1:
        chk.fail("insurance", "give exactly one of loading or curve")
    if "curve" in ins:
        chk.curve(ins["curve"], "insurance.curve")
    else:
        chk.number(ins["loading"], "insurance.loading")

    inc = doc["income"]
    chk.keys(inc, "income", {"i0", "growth", "curve"})
    if "curve" in inc:
        if len(inc) != 1:
            chk.fail("income", "a curve income takes no other keys")
        chk.curve(inc["curve"], "income.curve")
    else:
        if "i0" not in inc:
            chk.fail("income.i0", "missing required key")
        chk.number(inc["i0"], "income.i0")
        chk.number(inc.get("growth", 0.0), "income.growth")

    prefs = doc["preferences"]
    chk.keys(prefs, "preferences", {"gamma", "rho", "T"}, ("gamma", "rho", "T"))
    for k in ("gamma", "rho", "T"):
        chk.number(prefs[k], f"preferences.{k}")
    if "x0" in doc:
        chk.number(doc["x0"], "x0")
    if "grid_steps" in doc:
        gs = doc["grid_steps"]
        if isinstance(gs, bool) or not isinstance(gs, int):
            chk.fail("grid_steps", "expected an integer")
    return doc


def _curve(doc) -> Curve:
    return Curve(doc["t"], doc["values"], doc.get("interpolation", "linear"))


def scenario_from_dict(doc: dict, text: str | None = None) -> Scenario:
    """Validate ``doc`` strictly and build a :class:`Scenario`; raises SchemaError on any problem."""
    _validate(doc, text)
    try:
        market = market_from_dict(doc["market"])
        mort = dict(doc["mortality"])
        if mort.get("form") == "gompertz_makeham" and "log_scale" in mort:
            mortality = GompertzMakeham(float(mort["base"]), math.exp(float(mort["log_scale"])), float(mort["growth"]))
        else:
            mortality = mortality_from_dict(mort)
        ins = doc["insurance"]
        insurance = CurveInsurance(_curve(ins["curve"])) if "curve" in ins else HazardLoading(float(ins["loading"]))
        inc = doc["income"]
        income = (CurveIncome(_curve(inc["curve"])) if "curve" in inc
                  else ExponentialIncome(float(inc["i0"]), float(inc.get("growth", 0.0))))
        p = doc["preferences"]
        prefs = Preferences(float(p["gamma"]), float(p["rho"]), float(p["T"]))
        return Scenario(market, mortality, insurance, income, prefs,
                        x0=float(doc.get("x0", 0.0)), grid_steps=int(doc.get("grid_steps", DEFAULT_GRID_STEPS)))
    except SchemaError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise SchemaError(f"invalid scenario: {exc}") from exc


def parse_override(item: str):
    """Split ``a.b.c=VALUE``; VALUE is read as JSON when possible, else kept as a string."""
    if "=" not in item:
        raise SchemaError(f"override {item!r} is not KEY=VALUE")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not key:
        raise SchemaError(f"override {item!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def apply_overrides(doc: dict, overrides) -> dict:
    """Return a copy of ``doc`` with dotted-key overrides applied (only existing or schema keys)."""
    out = copy.deepcopy(doc)
    for item in overrides or ():
        key, value = parse_override(item) if isinstance(item, str) else item
        parts = key.split(".")
        node = out
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise SchemaError(f"override {key!r}: no such section {part!r}")
            node = node[part]
        if not isinstance(node, dict):
            raise SchemaError(f"override {key!r}: parent is not an object")
        node[parts[-1]] = value
    return out


def load_scenario_dict(path) -> tuple[dict, str]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top level must be an object")
    return doc, text


def load_scenario(path, overrides=()) -> Scenario:
    doc, text = load_scenario_dict(path)
    return scenario_from_dict(apply_overrides(doc, overrides), text)


def figure1_dict() -> dict:
    return json.loads(resources.files("wage_earner.data").joinpath("fig1.json").read_text(encoding="utf-8"))


def figure1_scenario(overrides=()) -> Scenario:
    """The bundled Figure 1 scenario (optionally with overrides)."""
    return scenario_from_dict(apply_overrides(figure1_dict(), overrides))
