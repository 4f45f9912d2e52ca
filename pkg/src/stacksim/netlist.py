"""Circuit data model and a flat SPICE-subset text format.

Supported cards (case-insensitive keywords, case-sensitive names)::

    R<name> n1 n2 <ohms>
    C<name> n1 n2 <farads>
    V<name> n+ n- [DC] <volts>
    V<name> n+ n- PULSE(v1 v2 delay rise fall width period)
    M<name> drain gate source bulk <model> [W=<w> L=<l>]
    S<name> n+ n- ctrl+ ctrl- [ron=] [roff=] [vt=] [vw=]
    A<name> plus minus out ref [gain=] [vlo=] [vhi=]
    .model <name> nmos|pmos (key=value ...)
    .ic v(<node>)=<volts> ...
    .op
    .tran <tstep> <tstop>
    .end

Numbers accept the magnitude suffixes t g meg k m u n p f.  Lines starting
with ``*`` or ``;`` are comments; ``;`` also starts a trailing comment.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace

from .devices import MosParams, NMOS, PMOS

GROUND = "0"

MOS = "mos"
RESISTOR = "resistor"
CAPACITOR = "capacitor"
DC_SOURCE = "dc-source"
PULSE_SOURCE = "pulse-source"
SENSEAMP = "behavioral-senseamp"
SWITCH = "switch"

# kind -> terminal count
ARITY = {
    MOS: 4,
    RESISTOR: 2,
    CAPACITOR: 2,
    DC_SOURCE: 2,
    PULSE_SOURCE: 2,
    SENSEAMP: 4,
    SWITCH: 4,
}

SWITCH_DEFAULTS = {"ron": 100.0, "roff": 1e14, "vt": 0.6, "vw": 0.02}
SENSEAMP_DEFAULTS = {"gain": 1000.0, "vlo": 0.0, "vhi": 1.2}
MOS_INSTANCE_KEYS = ("w", "l")
PULSE_FIELDS = ("v1", "v2", "delay", "rise", "fall", "width", "period")
MODEL_KEYS = tuple(f.name for f in fields(MosParams) if f.name != "polarity")

_CARD_KIND = {"R": RESISTOR, "C": CAPACITOR, "M": MOS, "S": SWITCH, "A": SENSEAMP}


@dataclass(frozen=True)
class DeviceInstance:
    """One circuit element.

    ``params`` is a sorted tuple of ``(key, value)`` pairs so instances stay
    hashable and compare structurally.  ``line`` records the source line of a
    parsed card and is ignored by equality.
    """

    name: str
    kind: str
    nodes: tuple
    value: float | None = None
    model: str | None = None
    params: tuple = ()
    line: int = field(default=0, compare=False, repr=False)

    def param(self, key, default=None):
        for k, v in self.params:
            if k == key:
                return v
        return default

    @property
    def pdict(self) -> dict:
        return dict(self.params)


def make_device(name, kind, nodes, value=None, model=None, line=0, **params):
    return DeviceInstance(name, kind, tuple(nodes), value if value is None else float(value),
                          model, tuple(sorted((k, float(v)) for k, v in params.items())), line)


@dataclass(frozen=True)
class Netlist:
    title: str = ""
    devices: tuple = ()
    models: dict = field(default_factory=dict)
    op: bool = False
    tran: tuple | None = None  # (tstep, tstop)
    initial: tuple = ()  # ((node, volts), ...)

    @property
    def nodes(self) -> list:
        """Ground first, then every terminal node in order of appearance."""
        seen = {GROUND: None}
        for d in self.devices:
            for n in d.nodes:
                seen.setdefault(n, None)
        for n, _ in self.initial:
            seen.setdefault(n, None)
        return list(seen)

    def device(self, name) -> DeviceInstance:
        for d in self.devices:
            if d.name == name:
                return d
        raise KeyError(name)

    def of_kind(self, *kinds) -> list:
        return [d for d in self.devices if d.kind in kinds]

    def mos_params(self, d: DeviceInstance) -> MosParams:
        card = self.models[d.model]
        w, l = d.param("w"), d.param("l")
        if w is not None and l is not None:
            return card.sized(w / l)
        return card

    @property
    def initial_map(self) -> dict:
        return dict(self.initial)

    def extended(self, devices=(), models=None, initial=None, title=None) -> "Netlist":
        new_models = dict(self.models)
        new_models.update(models or {})
        new_initial = dict(self.initial)
        new_initial.update(initial or {})
        return replace(self, title=self.title if title is None else title,
                       devices=self.devices + tuple(devices), models=new_models,
                       initial=tuple(new_initial.items()))


@dataclass(frozen=True)
class ParseDiagnostic:
    line: int
    column: int
    message: str
    severity: str = "error"

    def __str__(self):
        return f"{self.line}:{self.column}: {self.severity}: {self.message}"


class NetlistError(ValueError):
    """Raised by :func:`parse_netlist` when the source has errors."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


# ---------------------------------------------------------------- numbers

_SUFFIX = {"t": 1e12, "g": 1e9, "meg": 1e6, "k": 1e3, "m": 1e-3,
           "u": 1e-6, "n": 1e-9, "p": 1e-12, "f": 1e-15}
_NUMBER = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:e[+-]?\d+)?)(meg|[tgkmunpf])?([a-z]*)$",
                     re.IGNORECASE)


def parse_value(text: str) -> float:
    """Parse a SPICE number such as ``1k``, ``50f`` or ``2.5e-9``."""
    m = _NUMBER.match(text.strip())
    if not m:
        raise ValueError(f"invalid number {text!r}")
    value = float(m.group(1))
    if m.group(2):
        value *= _SUFFIX[m.group(2).lower()]
    if not math.isfinite(value):
        raise ValueError(f"non-finite number {text!r}")
    return value


def format_value(x: float) -> str:
    # repr round-trips floats exactly
    return repr(float(x))


# ----------------------------------------------------------------- parsing

_TOKEN = re.compile(r"[^\s(),]+")


class _Token(str):
    col: int

    def __new__(cls, text, col):
        obj = super().__new__(cls, text)
        obj.col = col
        return obj


def _tokens(line: str) -> list:
    return [_Token(m.group(0), m.start() + 1) for m in _TOKEN.finditer(line)]


def _strip_comment(line: str) -> str:
    i = line.find(";")
    return line if i < 0 else line[:i]


def _parse_keyvals(tokens, lineno, diags, allowed):
    """Parse ``key=value`` tokens, tolerating spaces around ``=``."""
    out = {}
    merged = []
    for t in tokens:
        if merged and (t.startswith("=") or merged[-1].endswith("=")):
            prev = merged.pop()
            merged.append(_Token(prev + t, prev.col))
        else:
            merged.append(t)
    for t in merged:
        key, sep, val = t.partition("=")
        key = key.lower()
        if not sep or not val:
            diags.append(ParseDiagnostic(lineno, t.col, f"expected key=value, got {t!r}"))
            continue
        if key not in allowed:
            diags.append(ParseDiagnostic(lineno, t.col, f"unknown parameter {key!r}"))
            continue
        try:
            out[key] = parse_value(val)
        except ValueError as exc:
            diags.append(ParseDiagnostic(lineno, t.col, str(exc)))
    return out


def _parse_number(tok, lineno, diags):
    try:
        return parse_value(tok)
    except ValueError as exc:
        diags.append(ParseDiagnostic(lineno, tok.col, str(exc)))
        return None


def _parse_source(toks, lineno, diags):
    name = toks[0]
    if len(toks) < 4:
        diags.append(ParseDiagnostic(lineno, name.col,
                                     f"expected 2 terminals and a value for {name}, got {max(len(toks) - 1, 0)} fields"))
        return None
    nodes = (str(toks[1]), str(toks[2]))
    rest = toks[3:]
    head = rest[0].lower()
    if head == "pulse":
        args = rest[1:]
        if len(args) != len(PULSE_FIELDS):
            diags.append(ParseDiagnostic(lineno, rest[0].col,
                                         f"PULSE needs {len(PULSE_FIELDS)} values, got {len(args)}"))
            return None
        vals = [_parse_number(a, lineno, diags) for a in args]
        if None in vals:
            return None
        return make_device(str(name), PULSE_SOURCE, nodes, line=lineno, **dict(zip(PULSE_FIELDS, vals)))
    if head == "dc":
        rest = rest[1:]
    if len(rest) != 1:
        col = rest[1].col if len(rest) > 1 else toks[-1].col
        diags.append(ParseDiagnostic(lineno, col, f"expected a single DC value for {name}"))
        return None
    v = _parse_number(rest[0], lineno, diags)
    if v is None:
        return None
    return make_device(str(name), DC_SOURCE, nodes, value=v, line=lineno)


def _parse_device(toks, lineno, diags):
    name = toks[0]
    letter = name[0].upper()
    if letter == "V":
        return _parse_source(toks, lineno, diags)
    kind = _CARD_KIND.get(letter)
    if kind is None:
        diags.append(ParseDiagnostic(lineno, name.col, f"unknown card letter {name[0]!r}"))
        return None
    arity = ARITY[kind]
    positional = [t for t in toks[1:] if "=" not in t]
    keyvals = [t for t in toks[1:] if "=" in t]
    if kind in (RESISTOR, CAPACITOR):
        if len(toks) != 4:
            diags.append(ParseDiagnostic(lineno, name.col,
                                         f"{name} expects 2 terminals and a value, got {len(toks) - 1} fields"))
            return None
        v = _parse_number(toks[3], lineno, diags)
        if v is None:
            return None
        return make_device(str(name), kind, (toks[1], toks[2]), value=v, line=lineno)
    if kind == MOS:
        if len(positional) != arity + 1:
            diags.append(ParseDiagnostic(lineno, name.col,
                                         f"{name} expects {arity} terminals and a model, got {len(positional)} fields"))
            return None
        params = _parse_keyvals(keyvals, lineno, diags, MOS_INSTANCE_KEYS)
        if len(params) == 1:
            diags.append(ParseDiagnostic(lineno, name.col, f"{name}: W and L must be given together"))
            return None
        d = make_device(str(name), MOS, positional[:4], model=str(positional[4]), line=lineno, **params)
        return d
    if len(positional) != arity:
        diags.append(ParseDiagnostic(lineno, name.col,
                                     f"{name} expects {arity} terminals, got {len(positional)}"))
        return None
    defaults = SWITCH_DEFAULTS if kind == SWITCH else SENSEAMP_DEFAULTS
    params = dict(defaults)
    params.update(_parse_keyvals(keyvals, lineno, diags, tuple(defaults)))
    return make_device(str(name), kind, positional, line=lineno, **params)


def _parse_model(toks, lineno, diags):
    if len(toks) < 3:
        diags.append(ParseDiagnostic(lineno, toks[0].col, ".model needs a name and a type"))
        return None
    name, mtype = str(toks[1]), toks[2].lower()
    if mtype not in (NMOS, PMOS):
        diags.append(ParseDiagnostic(lineno, toks[2].col, f"unknown model type {toks[2]!r}"))
        return None
    vals = _parse_keyvals(toks[3:], lineno, diags, MODEL_KEYS)
    try:
        return name, MosParams(polarity=mtype, **vals)
    except ValueError as exc:
        diags.append(ParseDiagnostic(lineno, toks[0].col, f"model {name}: {exc}"))
        return None


_IC = re.compile(r"v\(([^)\s]+)\)\s*=\s*(\S+)", re.IGNORECASE)


def _parse(source: str):
    diags = []
    lines = source.splitlines()
    title = lines[0].strip() if lines else ""
    devices, models, initial = [], {}, {}
    model_lines = {}
    op, tran = False, None
    ended = False
    for lineno, raw in enumerate(lines[1:], start=2):
        text = _strip_comment(raw)
        stripped = text.strip()
        if not stripped or stripped.startswith("*"):
            continue
        if ended:
            diags.append(ParseDiagnostic(lineno, 1, "content after .end ignored", "warning"))
            break
        if stripped.startswith("."):
            toks = _tokens(text)
            word = toks[0].lower()
            if word == ".end":
                ended = True
            elif word == ".op":
                op = True
            elif word == ".tran":
                vals = [_parse_number(t, lineno, diags) for t in toks[1:]]
                if len(vals) != 2:
                    diags.append(ParseDiagnostic(lineno, toks[0].col, ".tran needs <tstep> <tstop>"))
                elif None not in vals:
                    if not 0 < vals[0] <= vals[1]:
                        diags.append(ParseDiagnostic(lineno, toks[0].col, ".tran requires 0 < tstep <= tstop"))
                    tran = (vals[0], vals[1])
            elif word == ".model":
                got = _parse_model(toks, lineno, diags)
                if got:
                    if got[0] in models:
                        diags.append(ParseDiagnostic(lineno, toks[1].col,
                                                     f"duplicate model {got[0]!r}"))
                    models[got[0]] = got[1]
                    model_lines[got[0]] = lineno
            elif word == ".ic":
                body = text[text.lower().find(".ic") + 3:]
                found = list(_IC.finditer(body))
                if not found:
                    diags.append(ParseDiagnostic(lineno, toks[0].col, ".ic expects v(node)=value entries"))
                for m in found:
                    col = text.lower().find(".ic") + 3 + m.start() + 1
                    v = _parse_number(_Token(m.group(2), col), lineno, diags)
                    if v is not None:
                        initial[m.group(1)] = v
            else:
                diags.append(ParseDiagnostic(lineno, toks[0].col, f"unknown directive {toks[0]!r}"))
            continue
        toks = _tokens(text)
        if not toks:
            col = len(text) - len(text.lstrip()) + 1
            diags.append(ParseDiagnostic(lineno, col, "line has no card name"))
            continue
        d = _parse_device(toks, lineno, diags)
        if d is not None:
            devices.append(d)
    if lines and not ended:
        diags.append(ParseDiagnostic(len(lines), 1, "missing .end", "warning"))
    netlist = Netlist(title, tuple(devices), models, op, tran, tuple(initial.items()))
    diags.extend(validate(netlist))
    diags.sort(key=lambda d: (d.line, d.column))
    return netlist, diags


def diagnose(source: str) -> list:
    """All diagnostics for ``source``; never raises on malformed input."""
    return _parse(source)[1]


def parse_netlist(source: str) -> Netlist:
    """Parse and validate ``source``.

    Raises :class:`NetlistError` carrying every error diagnostic (not just
    the first) when the text is malformed or fails validation.
    """
    netlist, diags = _parse(source)
    errors = [d for d in diags if d.severity == "error"]
    if errors:
        raise NetlistError(errors)
    return netlist


# -------------------------------------------------------------- validation

def validate(n: Netlist) -> list:
    """Check the netlist invariants and connectivity.

    Positions come from the instances' source lines; devices built in code
    report line 0.
    """
    diags = []
    first = {}
    for d in n.devices:
        where = (d.line, 1)
        if d.name in first:
            diags.append(ParseDiagnostic(*where, f"duplicate instance {d.name!r}"
                                                 f" (first defined on line {first[d.name]})"))
        else:
            first[d.name] = d.line
        if d.kind not in ARITY:
            diags.append(ParseDiagnostic(*where, f"{d.name}: unknown kind {d.kind!r}"))
            continue
        if len(d.nodes) != ARITY[d.kind]:
            diags.append(ParseDiagnostic(*where, f"{d.name}: expects {ARITY[d.kind]} terminals,"
                                                 f" got {len(d.nodes)}"))
        numbers = [v for _, v in d.params] + ([d.value] if d.value is not None else [])
        if not all(math.isfinite(v) for v in numbers):
            diags.append(ParseDiagnostic(*where, f"{d.name}: non-finite parameter"))
        if d.kind == MOS and d.model not in n.models:
            diags.append(ParseDiagnostic(*where, f"missing model {d.model!r}"))
        if d.kind in (RESISTOR, CAPACITOR) and (d.value is None or d.value <= 0):
            diags.append(ParseDiagnostic(*where, f"{d.name}: value must be positive"))

    if n.devices and not any(GROUND in d.nodes for d in n.devices):
        diags.append(ParseDiagnostic(1, 1, f"missing ground node {GROUND!r}"))

    # connectivity: union-find over device terminals
    parent = {}

    def find(a):
        parent.setdefault(a, a)
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    touches = {}
    first_line = {}
    for d in n.devices:
        for node in d.nodes:
            touches[node] = touches.get(node, 0) + 1
            first_line.setdefault(node, d.line)
            parent[find(node)] = find(d.nodes[0])
    ground_root = find(GROUND)
    for node in touches:
        if node == GROUND:
            continue
        if touches[node] < 2 or find(node) != ground_root:
            diags.append(ParseDiagnostic(first_line[node], 1, f"floating node {node!r}", "warning"))
    return diags


# ----------------------------------------------------------- serialization

def _card(d: DeviceInstance) -> str:
    nodes = " ".join(d.nodes)
    p = d.pdict
    if d.kind in (RESISTOR, CAPACITOR):
        return f"{d.name} {nodes} {format_value(d.value)}"
    if d.kind == DC_SOURCE:
        return f"{d.name} {nodes} DC {format_value(d.value)}"
    if d.kind == PULSE_SOURCE:
        args = " ".join(format_value(p[k]) for k in PULSE_FIELDS)
        return f"{d.name} {nodes} PULSE({args})"
    if d.kind == MOS:
        size = "".join(f" {k.upper()}={format_value(p[k])}" for k in MOS_INSTANCE_KEYS if k in p)
        return f"{d.name} {nodes} {d.model}{size}"
    keys = SWITCH_DEFAULTS if d.kind == SWITCH else SENSEAMP_DEFAULTS
    args = " ".join(f"{k}={format_value(p[k])}" for k in keys)
    return f"{d.name} {nodes} {args}"


def serialize_netlist(n: Netlist) -> str:
    """Canonical text that :func:`parse_netlist` maps back to an equal Netlist."""
    out = [n.title]
    for name, card in n.models.items():
        args = " ".join(f"{k}={format_value(getattr(card, k))}" for k in MODEL_KEYS)
        out.append(f".model {name} {card.polarity} ({args})")
    out.extend(_card(d) for d in n.devices)
    if n.initial:
        out.append(".ic " + " ".join(f"v({node})={format_value(v)}" for node, v in n.initial))
    if n.op:
        out.append(".op")
    if n.tran:
        out.append(f".tran {format_value(n.tran[0])} {format_value(n.tran[1])}")
    out.append(".end")
    return "\n".join(out) + "\n"
