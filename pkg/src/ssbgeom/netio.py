"""Network case ingestion and assembly of the rectangular power flow map.

Two input formats are understood: IEEE Common Data Format text and a native
JSON document (schema in ``CASE_SCHEMA``).  All powers are stored per unit on
the case's ``base_mva``; angles in degrees.

Voltage coordinates are ordered ``(e_1, f_1, ..., e_m, f_m)`` with
``V_k = e_k + j f_k`` and map components ``(P_1, Q_1, ..., P_m, Q_m)``.
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass
from importlib import resources
from typing import Literal

import jsonschema
import numpy as np

from .quadmap import QuadraticMap

__all__ = [
    "Bus",
    "Branch",
    "NetworkCase",
    "CaseFormatError",
    "parse_cdf",
    "parse_native",
    "serialize_native",
    "load_case",
    "builtin_case",
    "ybus",
    "assemble_quadratic",
    "flat_profile",
]

BusType = Literal["PQ", "PV", "slack"]
_CDF_TYPES = {0: "PQ", 1: "PQ", 2: "PV", 3: "slack"}


class CaseFormatError(ValueError):
    """Malformed or inconsistent case data."""


@dataclass(frozen=True)
class Bus:
    id: int
    type: BusType = "PQ"
    Pd: float = 0.0
    Qd: float = 0.0
    Pg: float = 0.0
    Qg: float = 0.0
    Gs: float = 0.0
    Bs: float = 0.0
    base_kv: float = 0.0
    Vm: float = 1.0
    Va: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0
    tap: float = 1.0
    shift: float = 0.0


@dataclass(frozen=True)
class NetworkCase:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    base_mva: float = 100.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        seen = set()
        for bus in self.buses:
            if bus.id in seen:
                raise CaseFormatError(f"duplicate bus id {bus.id}")
            seen.add(bus.id)
        for k, br in enumerate(self.branches):
            for end in (br.from_bus, br.to_bus):
                if end not in seen:
                    raise CaseFormatError(f"branch {k} refers to nonexistent bus {end}")

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    def index(self) -> dict[int, int]:
        return {bus.id: i for i, bus in enumerate(self.buses)}

    def slack_index(self) -> int:
        idx = [i for i, bus in enumerate(self.buses) if bus.type == "slack"]
        if len(idx) != 1:
            raise CaseFormatError(f"expected exactly one slack bus, found {len(idx)}")
        return idx[0]


# --------------------------------------------------------------------------
# IEEE Common Data Format

# 1-based inclusive column spans of the fields read from each card
_BUS_COLS = {
    "id": (1, 4), "type": (25, 26), "Vm": (28, 33), "Va": (34, 40),
    "Pd": (41, 49), "Qd": (50, 58), "Pg": (59, 67), "Qg": (68, 75),
    "base_kv": (77, 83), "Gs": (107, 114), "Bs": (115, 122),
}
# token positions after removing the bus name
_BUS_TOKENS = {
    "id": 0, "type": 3, "Vm": 4, "Va": 5, "Pd": 6, "Qd": 7, "Pg": 8, "Qg": 9,
    "base_kv": 10, "Gs": 14, "Bs": 15,
}
_BRANCH_COLS = {
    "from_bus": (1, 4), "to_bus": (6, 9), "r": (20, 29), "x": (30, 40),
    "b": (41, 50), "tap": (77, 82), "shift": (84, 90),
}
_BRANCH_TOKENS = {
    "from_bus": 0, "to_bus": 1, "r": 6, "x": 7, "b": 8, "tap": 14, "shift": 15,
}
_OPTIONAL = {"base_kv", "Gs", "Bs", "tap", "shift"}


def _fields_positional(line, cols):
    out = {}
    for key, (first, last) in cols.items():
        text = line[first - 1:last].strip()
        if not text:
            if key in _OPTIONAL:
                out[key] = 0.0
                continue
            raise ValueError(f"empty field {key!r}")
        out[key] = float(text)
    return out


def _fields_tokens(tokens, positions):
    out = {}
    for key, pos in positions.items():
        if pos >= len(tokens):
            if key in _OPTIONAL:
                out[key] = 0.0
                continue
            raise ValueError(f"missing field {key!r}")
        out[key] = float(tokens[pos])
    return out


def _bus_tokens(line):
    """Whitespace tokens of a bus card with the (possibly multi-word) name removed."""
    toks = line.split()
    # a complete card has 16 numeric fields after the name
    if len(toks) >= 18:
        return [toks[0]] + toks[-16:]
    i = 1
    while i < len(toks) and not _is_float(toks[i]):
        i += 1
    return [toks[0]] + toks[i:]


def _parse_card(line, cols, tokens, lineno, what):
    try:
        return _fields_positional(line, cols)
    except ValueError:
        pass
    try:
        return _fields_tokens(tokens, _BUS_TOKENS if what == "bus" else _BRANCH_TOKENS)
    except ValueError as exc:
        raise CaseFormatError(f"line {lineno}: malformed {what} card: {exc}") from None


def _section(lines, header, start=0):
    """Return (first card index, terminator index) of a CDF section."""
    for i in range(start, len(lines)):
        if lines[i].upper().startswith(header):
            for j in range(i + 1, len(lines)):
                if lines[j].strip().startswith("-999"):
                    return i + 1, j
                if "FOLLOWS" in lines[j].upper():
                    break
            raise CaseFormatError(f"section {header!r} is not terminated by -999")
    raise CaseFormatError(f"missing section {header!r}")


def parse_cdf(text) -> NetworkCase:
    """Parse IEEE Common Data Format text (a string or a text stream).

    Fields are read from their standard columns; cards that do not follow the
    column layout are split on whitespace after cutting out the bus name.
    """
    if not isinstance(text, str):
        text = text.read()
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise CaseFormatError("empty case file")
    title = lines[0]
    try:
        base_mva = float(title[31:37])
    except ValueError:
        toks = title.split()
        base_mva = next((float(t) for t in toks[2:] if _is_float(t)), 100.0)

    b0, b1 = _section(lines, "BUS DATA FOLLOWS")
    buses = []
    seen = set()
    for i in range(b0, b1):
        line = lines[i]
        if not line.strip():
            continue
        tokens = _bus_tokens(line)
        f = _parse_card(line, _BUS_COLS, tokens, i + 1, "bus")
        bid = int(f["id"])
        if bid in seen:
            raise CaseFormatError(f"line {i + 1}: duplicate bus id {bid}")
        seen.add(bid)
        buses.append(Bus(
            id=bid, type=_CDF_TYPES.get(int(f["type"]), "PQ"),
            Pd=f["Pd"] / base_mva, Qd=f["Qd"] / base_mva,
            Pg=f["Pg"] / base_mva, Qg=f["Qg"] / base_mva,
            Gs=f["Gs"], Bs=f["Bs"], base_kv=f["base_kv"], Vm=f["Vm"], Va=f["Va"],
        ))

    r0, r1 = _section(lines, "BRANCH DATA FOLLOWS", b1)
    branches = []
    for i in range(r0, r1):
        line = lines[i]
        if not line.strip():
            continue
        f = _parse_card(line, _BRANCH_COLS, line.split(), i + 1, "branch")
        branches.append(Branch(
            from_bus=int(f["from_bus"]), to_bus=int(f["to_bus"]),
            r=f["r"], x=f["x"], b=f["b"],
            tap=f["tap"] if f["tap"] != 0.0 else 1.0, shift=f["shift"],
        ))
    return NetworkCase(buses, branches, base_mva, title[45:].strip() or title.strip())


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


# --------------------------------------------------------------------------
# native JSON

_NUM = {"type": "number"}
CASE_SCHEMA = {
    "type": "object",
    "required": ["buses", "branches"],
    "properties": {
        "name": {"type": "string"},
        "base_mva": {"type": "number", "exclusiveMinimum": 0},
        "buses": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id"],
                "properties": {
                    "id": {"type": "integer"},
                    "type": {"enum": ["PQ", "PV", "slack"]},
                    **{k: _NUM for k in ("Pd", "Qd", "Pg", "Qg", "Gs", "Bs", "base_kv", "Vm", "Va")},
                },
                "additionalProperties": False,
            },
        },
        "branches": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["from_bus", "to_bus", "r", "x"],
                "properties": {
                    "from_bus": {"type": "integer"},
                    "to_bus": {"type": "integer"},
                    **{k: _NUM for k in ("r", "x", "b", "tap", "shift")},
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}


def parse_native(text) -> NetworkCase:
    """Parse the native JSON case format; schema violations name a JSON pointer."""
    if not isinstance(text, str):
        text = text.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"invalid JSON: {exc}") from None
    validator = jsonschema.Draft7Validator(CASE_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        pointer = "/" + "/".join(str(p) for p in err.absolute_path)
        raise CaseFormatError(f"schema violation at {pointer}: {err.message}")
    buses = [Bus(**b) for b in doc["buses"]]
    branches = [Branch(**b) for b in doc["branches"]]
    return NetworkCase(buses, branches, doc.get("base_mva", 100.0), doc.get("name", ""))


def serialize_native(case: NetworkCase) -> str:
    doc = {
        "name": case.name,
        "base_mva": case.base_mva,
        "buses": [asdict(b) for b in case.buses],
        "branches": [asdict(b) for b in case.branches],
    }
    return json.dumps(doc, indent=1)


def load_case(path, fmt: str | None = None) -> NetworkCase:
    """Read a case from ``path`` ('-' for standard input); format from suffix if not given."""
    import sys

    if fmt is None:
        fmt = "json" if str(path).endswith(".json") else "cdf"
    if str(path) == "-":
        text = sys.stdin.read()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return parse_native(text) if fmt == "json" else parse_cdf(text)


def builtin_case(name: str) -> NetworkCase:
    """One of the bundled archive networks: 'ieee14', 'ieee30', 'ieee57', 'ieee118'."""
    data = resources.files("ssbgeom") / "data" / f"{name}.cdf"
    return parse_cdf(io.StringIO(data.read_text()))


# --------------------------------------------------------------------------
# network matrices


def ybus(case: NetworkCase) -> np.ndarray:
    """Complex nodal admittance matrix.

    Transformers follow the usual convention: the off-nominal tap ``t e^{j phi}``
    sits at the from-bus, so ``Y_ff = (y + jb/2)/t^2``, ``Y_ft = -y/(t e^{-j phi})``,
    ``Y_tf = -y/(t e^{j phi})``, ``Y_tt = y + jb/2``.
    """
    idx = case.index()
    Y = np.zeros((case.n_bus, case.n_bus), dtype=complex)
    for k, br in enumerate(case.branches):
        if br.r == 0.0 and br.x == 0.0:
            raise CaseFormatError(f"branch {k} ({br.from_bus}-{br.to_bus}) has zero impedance")
        y = 1.0 / complex(br.r, br.x)
        t = br.tap * np.exp(1j * np.deg2rad(br.shift))
        f, to = idx[br.from_bus], idx[br.to_bus]
        ych = 0.5j * br.b
        Y[f, f] += (y + ych) / abs(t) ** 2
        Y[to, to] += y + ych
        Y[f, to] -= y / np.conj(t)
        Y[to, f] -= y / t
    for i, bus in enumerate(case.buses):
        Y[i, i] += complex(bus.Gs, bus.Bs)
    return Y


def _injection_forms(Y):
    """Coefficient matrices (before symmetrization) of P_i and Q_i in (e, f) coordinates."""
    m = Y.shape[0]
    G, B = Y.real, Y.imag
    mats = np.zeros((2 * m, 2 * m, 2 * m))
    e = np.arange(m) * 2
    f = e + 1
    for i in range(m):
        P = mats[2 * i]
        # P_i = e_i sum_k (G e_k - B f_k) + f_i sum_k (G f_k + B e_k)
        P[e[i], e] += G[i]
        P[e[i], f] -= B[i]
        P[f[i], f] += G[i]
        P[f[i], e] += B[i]
        Q = mats[2 * i + 1]
        # Q_i = f_i sum_k (G e_k - B f_k) - e_i sum_k (G f_k + B e_k)
        Q[f[i], e] += G[i]
        Q[f[i], f] -= B[i]
        Q[e[i], f] -= G[i]
        Q[e[i], e] -= B[i]
    return mats


def assemble_quadratic(case: NetworkCase, eliminate_slack: bool = False,
                       slack_voltage: complex = 1.0) -> QuadraticMap:
    """Rectangular-coordinate power flow map of ``case``.

    With ``eliminate_slack`` the slack bus voltage is fixed to ``slack_voltage``
    and its two equations are dropped, giving an inhomogeneous map on
    ``2 m - 2`` coordinates.  The full map is homogeneous but invariant under a
    global phase rotation, so its Jacobian is singular everywhere.
    """
    mats = _injection_forms(ybus(case))
    if not eliminate_slack:
        return QuadraticMap(mats)
    s = case.slack_index()
    N = mats.shape[0]
    keep = np.array([i for i in range(N) if i // 2 != s])
    fixed = np.zeros(N)
    fixed[2 * s] = np.real(slack_voltage)
    fixed[2 * s + 1] = np.imag(slack_voltage)
    sym = 0.5 * (mats + mats.transpose(0, 2, 1))[keep]
    A = sym[:, keep][:, :, keep]
    linear = 2.0 * (sym[:, keep, :] @ fixed)
    constant = (sym @ fixed) @ fixed
    return QuadraticMap(A, linear, constant)


def flat_profile(case: NetworkCase, eliminate_slack: bool = False) -> np.ndarray:
    """All voltages 1 + 0j in the coordinates used by :func:`assemble_quadratic`."""
    m = case.n_bus - (1 if eliminate_slack else 0)
    v = np.zeros(2 * m)
    v[0::2] = 1.0
    return v
