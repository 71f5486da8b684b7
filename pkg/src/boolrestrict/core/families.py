"""Function specs (``tribes:w=5``, ``maj:n=101``, ``table:path=f.tt``) and table files."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .functions import (
    And,
    BooleanFunction,
    Constant,
    Dictator,
    Majority,
    Or,
    Parity,
    TableFunction,
    Tribes,
    TruthTable,
)


class SpecError(ValueError):
    pass


_ALIASES = {
    "maj": "majority", "majority": "majority",
    "tribes": "tribes", "parity": "parity", "xor": "parity",
    "and": "and", "or": "or", "dictator": "dictator", "dict": "dictator",
    "random": "random", "table": "table", "const": "const",
}

# kind -> (required keys, optional keys with defaults)
_PARAMS = {
    "tribes": ({"w"}, {"n": None}),
    "majority": ({"n"}, {"allow_even": 0}),
    "parity": ({"n"}, {}),
    "and": ({"n"}, {}),
    "or": ({"n"}, {}),
    "dictator": ({"n"}, {"i": 0}),
    "random": ({"n"}, {"seed": 0, "bias": 0.5}),
    "table": ({"path"}, {}),
    "const": ({"n"}, {"value": 1}),
}


@dataclass(frozen=True)
class FunctionSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __str__(self):
        if not self.params:
            return self.kind
        body = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.kind}:{body}"


def _coerce(kind: str, key: str, raw: str):
    if key == "path":
        return raw
    if key == "bias":
        try:
            v = float(raw)
        except ValueError:
            raise SpecError(f"{kind}: bias must be a number, got {raw!r}") from None
        if not 0.0 <= v <= 1.0:
            raise SpecError(f"{kind}: bias must lie in [0, 1]")
        return v
    try:
        return int(raw)
    except ValueError:
        raise SpecError(f"{kind}: parameter {key} must be an integer, got {raw!r}") from None


def parse_spec(text: str) -> FunctionSpec:
    text = text.strip()
    name, _, body = text.partition(":")
    kind = _ALIASES.get(name.strip().lower())
    if kind is None:
        raise SpecError(f"unknown function family {name!r}")
    required, optional = _PARAMS[kind]
    params = {}
    if body:
        for item in body.split(","):
            key, eq, val = item.partition("=")
            key = key.strip()
            if not eq or not key:
                raise SpecError(f"{kind}: malformed parameter {item!r}")
            if key not in required and key not in optional:
                raise SpecError(f"{kind}: unknown parameter {key!r}")
            params[key] = _coerce(kind, key, val.strip())
    missing = required - params.keys()
    if missing:
        raise SpecError(f"{kind}: missing parameter(s) {', '.join(sorted(missing))}")
    spec = FunctionSpec(kind, params)
    _validate(spec)
    return spec


def _validate(spec: FunctionSpec) -> None:
    p = spec.params
    if spec.kind == "tribes":
        if p["w"] < 1:
            raise SpecError("tribes: w must be >= 1")
        if p.get("n") is not None and (p["n"] < 1 or p["n"] % p["w"]):
            raise SpecError("tribes: n must be a positive multiple of w")
    if "n" in p and spec.kind != "tribes" and p["n"] < 1:
        raise SpecError(f"{spec.kind}: n must be >= 1")
    if spec.kind == "majority" and p["n"] % 2 == 0 and not p.get("allow_even"):
        raise SpecError(f"majority: n={p['n']} is even (pass allow_even=1 to use ties -> 1)")
    if spec.kind == "dictator" and not 0 <= p.get("i", 0) < p["n"]:
        raise SpecError("dictator: i must satisfy 0 <= i < n")
    if spec.kind == "random" and p["n"] > 24:
        raise SpecError("random: n must be <= 24")
    if spec.kind == "const" and p.get("value", 1) not in (0, 1):
        raise SpecError("const: value must be 0 or 1")


def make_family(spec: FunctionSpec | str) -> BooleanFunction:
    if isinstance(spec, str):
        spec = parse_spec(spec)
    _validate(spec)
    p = spec.params
    k = spec.kind
    if k == "tribes":
        return Tribes(p["w"], p.get("n"))
    if k == "majority":
        return Majority(p["n"], allow_even=bool(p.get("allow_even", 0)))
    if k == "parity":
        return Parity(p["n"])
    if k == "and":
        return And(p["n"])
    if k == "or":
        return Or(p["n"])
    if k == "dictator":
        return Dictator(p["n"], p.get("i", 0))
    if k == "const":
        return Constant(p["n"], p.get("value", 1))
    if k == "random":
        return TableFunction(random_table(p["n"], p.get("seed", 0), p.get("bias", 0.5)), name=str(spec))
    if k == "table":
        return TableFunction(read_table(p["path"]), name=str(spec))
    raise SpecError(f"unknown kind {k}")


def random_table(n: int, seed: int, bias: float = 0.5) -> TruthTable:
    rng = np.random.default_rng(seed)
    return TruthTable(n, (rng.random(1 << n) < bias).astype(np.uint8))


def format_table(t: TruthTable) -> str:
    """Two-line text form: ``n=<int>`` then a hex string; bit k of the integer is entry k."""
    nbits = 1 << t.n
    value = int.from_bytes(np.packbits(t.values, bitorder="little").tobytes(), "little")
    width = max(1, (nbits + 3) // 4)
    return f"n={t.n}\n{value:0{width}x}\n"


def parse_table(text: str) -> TruthTable:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if len(lines) != 2 or not lines[0].startswith("n="):
        raise SpecError("table file must have two lines: 'n=<int>' and a hex string")
    n = int(lines[0][2:])
    if not 0 <= n <= 24:
        raise SpecError(f"table arity {n} outside 0..24")
    value = int(lines[1], 16)
    nbits = 1 << n
    if value >> nbits:
        raise SpecError(f"hex string has bits beyond index {nbits - 1}")
    raw = np.frombuffer(value.to_bytes((nbits + 7) // 8, "little"), dtype=np.uint8)
    bits = np.unpackbits(raw, bitorder="little")[:nbits]
    return TruthTable(n, bits)


def read_table(path: str | Path) -> TruthTable:
    return parse_table(Path(path).read_text())


def write_table(t: TruthTable, path: str | Path) -> None:
    Path(path).write_text(format_table(t))
