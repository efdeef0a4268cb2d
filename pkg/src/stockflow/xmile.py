"""XMILE document parsing.

Covers the subset needed for stock-and-flow simulation: stocks with
``<inflow>``/``<outflow>``, ``<eqn>`` equations, ``<gf>`` graphical
functions, ``<sim_specs>``, ``<range>``/``<scale>`` limits and the
``<non_negative>`` flag.  Unsupported constructs (arrays, submodels,
unknown builtins) produce error diagnostics instead of being dropped.
"""
from __future__ import annotations

import re
import xml.parsers.expat
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from . import ir
from .errors import ConfigError, ExpressionError, XmileError
from .ir import (
    BUILTINS,
    RESERVED_WORDS,
    Binary,
    Call,
    Cond,
    Expr,
    Lookup,
    LookupTable,
    Num,
    Ref,
    SimSpecs,
    TimeRef,
    Unary,
    Variable,
    VarKind,
    normalize_name,
)


@dataclass(frozen=True)
class ParseDiagnostic:
    line: int
    column: int
    severity: str  # "error" | "warning"
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity} [{self.code}] {self.message}"


@dataclass
class ParseResult:
    model: Optional[ir.ModelIR]
    diagnostics: list[ParseDiagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.model is not None


# --- equation text -> expression tree ---------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<quoted>"[^"]*")
  | (?P<op><=|>=|<>|!=|[+\-*/^<>=(),])
    """,
    re.VERBOSE,
)

_COMMENT_RE = re.compile(r"\{[^{}]*\}")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    """Tokens as (kind, text, offset).  Braces hold comments and are removed
    beforehand (offsets stay relative to the stripped text)."""
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos] == "[":
            raise ExpressionError(
                "array subscripts are not supported", pos, code="unsupported_arrays"
            )
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise ExpressionError(f"unexpected character {text[pos]!r}", pos)
        pos = match.end()
        if match.lastgroup == "ws":
            continue
        tokens.append((match.lastgroup, match.group(), match.start()))
    tokens.append(("eof", "", len(text)))
    return tokens


_KEYWORDS = {"if", "then", "else", "and", "or", "not"}
_COMPARISONS = {"=", "<>", "<", "<=", ">", ">="}


class _ExprParser:
    """Recursive-descent parser for the XMILE equation grammar.

    Precedence, tightest first: ``^``, unary minus, ``* /``, ``+ -``,
    comparisons, ``not``, ``and``, ``or``.  ``^`` is left-associative,
    so ``-x^2`` reads as ``-(x^2)``.
    """

    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.index = 0

    def peek(self):
        return self.tokens[self.index]

    def next(self):
        token = self.tokens[self.index]
        self.index += 1
        return token

    def keyword(self) -> Optional[str]:
        kind, text, _ = self.peek()
        if kind == "ident" and text.lower() in _KEYWORDS:
            return text.lower()
        return None

    def expect_keyword(self, word: str):
        kind, text, offset = self.next()
        if kind != "ident" or text.lower() != word:
            raise ExpressionError(f"expected '{word.upper()}'", offset)

    def expect_op(self, op: str):
        kind, text, offset = self.next()
        if kind != "op" or text != op:
            raise ExpressionError(f"expected '{op}'", offset)

    def parse(self) -> Expr:
        expr = self.expression()
        kind, text, offset = self.peek()
        if kind != "eof":
            raise ExpressionError(f"unexpected trailing input {text!r}", offset)
        return expr

    def expression(self) -> Expr:
        if self.keyword() == "if":
            self.next()
            test = self.expression()
            self.expect_keyword("then")
            then = self.expression()
            self.expect_keyword("else")
            orelse = self.expression()
            return Cond(test, then, orelse)
        return self.or_expr()

    def or_expr(self) -> Expr:
        left = self.and_expr()
        while self.keyword() == "or":
            self.next()
            left = Binary("or", left, self.and_expr())
        return left

    def and_expr(self) -> Expr:
        left = self.not_expr()
        while self.keyword() == "and":
            self.next()
            left = Binary("and", left, self.not_expr())
        return left

    def not_expr(self) -> Expr:
        if self.keyword() == "not":
            self.next()
            return Unary("not", self.not_expr())
        return self.comparison()

    def comparison(self) -> Expr:
        left = self.additive()
        kind, text, _ = self.peek()
        if kind == "op" and (text in _COMPARISONS or text == "!="):
            self.next()
            op = "<>" if text == "!=" else text
            return Binary(op, left, self.additive())
        return left

    def additive(self) -> Expr:
        left = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in ("+", "-"):
                self.next()
                left = Binary(text, left, self.term())
            else:
                return left

    def term(self) -> Expr:
        left = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in ("*", "/"):
                self.next()
                left = Binary(text, left, self.unary())
            else:
                return left

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.next()
            return Unary("-", self.unary())
        if kind == "op" and text == "+":
            self.next()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        left = self.atom()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text == "^":
                self.next()
                left = Binary("^", left, self.exponent())
            else:
                return left

    def exponent(self) -> Expr:
        # allow a signed exponent: 2^-3
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.next()
            return Unary("-", self.exponent())
        return self.atom()

    def atom(self) -> Expr:
        kind, text, offset = self.next()
        if kind == "num":
            return Num(float(text))
        if kind == "quoted":
            return Ref(normalize_name(text[1:-1]))
        if kind == "op" and text == "(":
            inner = self.expression()
            self.expect_op(")")
            return inner
        if kind == "ident":
            lowered = text.lower()
            if lowered in _KEYWORDS:
                raise ExpressionError(f"unexpected keyword '{text}'", offset)
            next_kind, next_text, _ = self.peek()
            if next_kind == "op" and next_text == "(":
                return self.call(lowered, offset)
            if lowered == "time":
                return TimeRef()
            if lowered in BUILTINS:
                lo, hi = BUILTINS[lowered]
                if lo == 0:
                    return Call(lowered, ())
                raise ExpressionError(
                    f"builtin '{text}' requires arguments", offset
                )
            return Ref(normalize_name(text))
        raise ExpressionError(f"unexpected token {text!r}", offset)

    def call(self, name: str, offset: int) -> Expr:
        if name not in BUILTINS:
            raise ExpressionError(f"unknown function '{name}'", offset, code="unknown_builtin")
        self.expect_op("(")
        args: list[Expr] = []
        kind, text, _ = self.peek()
        if not (kind == "op" and text == ")"):
            args.append(self.expression())
            while True:
                kind, text, _ = self.peek()
                if kind == "op" and text == ",":
                    self.next()
                    args.append(self.expression())
                else:
                    break
        self.expect_op(")")
        lo, hi = BUILTINS[name]
        if not lo <= len(args) <= hi:
            raise ExpressionError(
                f"builtin '{name}' takes {lo}" + (f"..{hi}" if hi != lo else "")
                + f" arguments, got {len(args)}",
                offset,
            )
        if name == "time":
            return TimeRef()
        return Call(name, tuple(args))


def parse_expression(text: str) -> Expr:
    """Parse one equation string into an expression tree.

    Raises :class:`ExpressionError` with the character offset on bad input.
    """
    stripped = _COMMENT_RE.sub(lambda m: " " * len(m.group()), text)
    return _ExprParser(stripped).parse()


# --- minimal positioned XML DOM ----------------------------------------------


@dataclass
class _XmlNode:
    tag: str
    attrib: dict[str, str]
    line: int
    column: int
    children: list["_XmlNode"] = field(default_factory=list)
    text_parts: list[str] = field(default_factory=list)

    @property
    def text(self) -> str:
        return "".join(self.text_parts)

    def find(self, tag: str) -> Optional["_XmlNode"]:
        for child in self.children:
            if child.tag == tag:
                return child
        return None

    def findall(self, tag: str) -> list["_XmlNode"]:
        return [c for c in self.children if c.tag == tag]


def _local(tag: str) -> str:
    return tag.rsplit(":", 1)[-1].lower()


def _parse_xml(source: str) -> _XmlNode:
    parser = xml.parsers.expat.ParserCreate()
    root: list[_XmlNode] = []
    stack: list[_XmlNode] = []

    def start(tag, attrs):
        node = _XmlNode(
            tag=_local(tag),
            attrib={_local(k): v for k, v in attrs.items()},
            line=parser.CurrentLineNumber,
            column=parser.CurrentColumnNumber,
        )
        if stack:
            stack[-1].children.append(node)
        else:
            root.append(node)
        stack.append(node)

    def end(tag):
        stack.pop()

    def chars(data):
        if stack:
            stack[-1].text_parts.append(data)

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chars
    parser.Parse(source, True)
    return root[0]


# --- document walking --------------------------------------------------------


class _DocParser:
    def __init__(self):
        self.diags: list[ParseDiagnostic] = []
        self.variables: dict[str, Variable] = {}
        self.tables: dict[str, LookupTable] = {}
        self.positions: dict[str, tuple[int, int]] = {}

    def error(self, node: Optional[_XmlNode], code: str, message: str):
        line, col = (node.line, node.column) if node is not None else (0, 0)
        self.diags.append(ParseDiagnostic(line, col, "error", code, message))

    def warn(self, node: Optional[_XmlNode], code: str, message: str):
        line, col = (node.line, node.column) if node is not None else (0, 0)
        self.diags.append(ParseDiagnostic(line, col, "warning", code, message))

    @property
    def failed(self) -> bool:
        return any(d.severity == "error" for d in self.diags)

    def parse(self, source: str) -> ParseResult:
        try:
            root = _parse_xml(source)
        except xml.parsers.expat.ExpatError as exc:
            line = getattr(exc, "lineno", 0) or 0
            col = getattr(exc, "offset", 0) or 0
            return ParseResult(None, [ParseDiagnostic(line, col, "error", "malformed_xml", str(exc))])

        if root.tag != "xmile":
            self.error(root, "not_xmile", f"root element is <{root.tag}>, expected <xmile>")
            return ParseResult(None, self.diags)

        header = root.find("header")
        if header is not None and header.find("dimensions") is not None:
            self.error(header.find("dimensions"), "unsupported_arrays", "array dimensions are not supported")
        if root.find("dimensions") is not None:
            self.error(root.find("dimensions"), "unsupported_arrays", "array dimensions are not supported")

        specs = self.parse_sim_specs(root)

        models = root.findall("model")
        if not models:
            self.error(root, "missing_model", "document has no <model> element")
            return ParseResult(None, self.diags)
        if len(models) > 1 or models[0].attrib.get("name"):
            self.error(models[1] if len(models) > 1 else models[0],
                       "unsupported_submodels", "submodels/modules are not supported")
        model_node = models[0]

        for views_tag in ("views", "display", "style"):
            for node in root.findall(views_tag) + model_node.findall(views_tag):
                self.warn(node, "ignored_display", f"<{node.tag}> layout data ignored")

        variables_node = model_node.find("variables")
        if variables_node is None:
            self.error(model_node, "missing_model", "<model> has no <variables> element")
            return ParseResult(None, self.diags)

        for node in variables_node.children:
            if node.tag == "stock":
                self.parse_stock(node)
            elif node.tag == "flow":
                self.parse_flow_or_aux(node, VarKind.FLOW)
            elif node.tag == "aux":
                self.parse_flow_or_aux(node, VarKind.AUX)
            elif node.tag == "module":
                self.error(node, "unsupported_submodels", "submodels/modules are not supported")
            elif node.tag in ("group", "isee_prefs", "style"):
                self.warn(node, "ignored_display", f"<{node.tag}> ignored")
            else:
                self.error(node, "unsupported_feature", f"unsupported element <{node.tag}>")

        if self.failed or specs is None:
            return ParseResult(None, self.diags)

        model = ir.build_model(self.variables, self.tables, specs)
        for diag in ir.validate(model):
            line, col = self.positions.get(diag.variable or "", (0, 0))
            self.diags.append(
                ParseDiagnostic(line, col, diag.severity, "invalid_model", diag.message)
            )
        if self.failed:
            return ParseResult(None, self.diags)
        return ParseResult(model, self.diags)

    def parse_sim_specs(self, root: _XmlNode) -> Optional[SimSpecs]:
        node = root.find("sim_specs")
        if node is None:
            self.error(root, "missing_sim_specs", "document has no <sim_specs> element")
            return None

        def number(tag: str) -> Optional[float]:
            child = node.find(tag)
            if child is None or not child.text.strip():
                self.error(node, "missing_sim_specs", f"<sim_specs> is missing <{tag}>")
                return None
            try:
                return float(child.text.strip())
            except ValueError:
                self.error(child, "missing_sim_specs", f"<{tag}> is not a number: {child.text!r}")
                return None

        start = number("start")
        stop = number("stop")
        dt_node = node.find("dt")
        if dt_node is None:
            dt = 1.0
        else:
            try:
                dt = float(dt_node.text.strip())
            except ValueError:
                self.error(dt_node, "missing_sim_specs", f"<dt> is not a number: {dt_node.text!r}")
                return None
            if dt_node.attrib.get("reciprocal") == "true":
                dt = 1.0 / dt
        if start is None or stop is None:
            return None
        return SimSpecs(start=start, stop=stop, dt=dt, time_units=node.attrib.get("time_units", ""))

    def register(self, node: _XmlNode, var: Variable):
        if var.name in self.variables:
            self.error(node, "duplicate_name", f"duplicate variable '{var.name}'")
            return
        if var.name in RESERVED_WORDS:
            self.error(node, "reserved_name",
                       f"variable '{var.name}' collides with a reserved builtin name")
            return
        self.variables[var.name] = var
        self.positions[var.name] = (node.line, node.column)

    def name_of(self, node: _XmlNode) -> Optional[str]:
        raw = node.attrib.get("name", "")
        name = normalize_name(raw)
        if not name:
            self.error(node, "missing_name", f"<{node.tag}> has no name attribute")
            return None
        return name

    def check_unsupported(self, node: _XmlNode) -> None:
        for tag in ("dimensions", "element"):
            if node.find(tag) is not None:
                self.error(node.find(tag), "unsupported_arrays",
                           f"array construct <{tag}> on '{node.attrib.get('name', '?')}'")
        if node.find("conveyor") is not None or node.find("queue") is not None:
            self.error(node, "unsupported_feature",
                       f"conveyor/queue stocks are not supported ('{node.attrib.get('name', '?')}')")
        if node.find("dt") is not None:
            self.error(node.find("dt"), "unsupported_feature",
                       "per-variable dt overrides are not supported")

    def parse_eqn(self, node: _XmlNode, name: str) -> Optional[Expr]:
        eqn_node = node.find("eqn")
        if eqn_node is None or not eqn_node.text.strip():
            self.error(node, "missing_equation", f"'{name}' has no <eqn>")
            return None
        try:
            return parse_expression(eqn_node.text)
        except ExpressionError as exc:
            self.error(eqn_node, exc.code,
                       f"in equation of '{name}' at offset {exc.offset}: {exc}")
            return None

    def parse_limits(self, node: _XmlNode) -> Optional[tuple[float, float]]:
        for tag in ("range", "scale"):
            child = node.find(tag)
            if child is None:
                continue
            try:
                return (float(child.attrib["min"]), float(child.attrib["max"]))
            except (KeyError, ValueError):
                self.error(child, "invalid_limits", f"<{tag}> needs numeric min/max attributes")
                return None
        return None

    def parse_gf(self, node: _XmlNode, name: str) -> Optional[LookupTable]:
        gf = node.find("gf")
        if gf is None:
            return None
        if gf.attrib.get("type", "continuous") not in ("continuous", ""):
            self.error(gf, "unsupported_feature",
                       f"gf type '{gf.attrib['type']}' on '{name}' (only continuous is supported)")
            return None
        ypts_node = gf.find("ypts")
        if ypts_node is None or not ypts_node.text.strip():
            self.error(gf, "invalid_gf", f"graphical function on '{name}' has no <ypts>")
            return None
        sep = ypts_node.attrib.get("sep", ",")
        try:
            ypts = tuple(float(v) for v in ypts_node.text.strip().split(sep))
        except ValueError:
            self.error(ypts_node, "invalid_gf", f"bad <ypts> on '{name}'")
            return None
        xpts_node = gf.find("xpts")
        xscale_node = gf.find("xscale")
        if xpts_node is not None and xpts_node.text.strip():
            sep = xpts_node.attrib.get("sep", ",")
            try:
                xpts = tuple(float(v) for v in xpts_node.text.strip().split(sep))
            except ValueError:
                self.error(xpts_node, "invalid_gf", f"bad <xpts> on '{name}'")
                return None
        elif xscale_node is not None:
            try:
                lo = float(xscale_node.attrib["min"])
                hi = float(xscale_node.attrib["max"])
            except (KeyError, ValueError):
                self.error(xscale_node, "invalid_gf", f"<xscale> on '{name}' needs min/max")
                return None
            if len(ypts) < 2:
                self.error(gf, "invalid_gf", f"graphical function on '{name}' needs >= 2 points")
                return None
            span = hi - lo
            xpts = tuple(lo + span * i / (len(ypts) - 1) for i in range(len(ypts)))
        else:
            self.error(gf, "invalid_gf", f"graphical function on '{name}' has no <xscale>/<xpts>")
            return None
        return LookupTable(xpts, ypts)

    def parse_stock(self, node: _XmlNode):
        name = self.name_of(node)
        if name is None:
            return
        self.check_unsupported(node)
        initial = self.parse_eqn(node, name)
        inflows = tuple(normalize_name(c.text) for c in node.findall("inflow") if c.text.strip())
        outflows = tuple(normalize_name(c.text) for c in node.findall("outflow") if c.text.strip())
        units_node = node.find("units")
        self.register(node, Variable(
            name=name,
            kind=VarKind.STOCK,
            initial=initial,
            inflows=inflows,
            outflows=outflows,
            units=units_node.text.strip() if units_node is not None else None,
            limits=self.parse_limits(node),
            non_negative=node.find("non_negative") is not None,
        ))

    def parse_flow_or_aux(self, node: _XmlNode, kind: VarKind):
        name = self.name_of(node)
        if name is None:
            return
        self.check_unsupported(node)
        if kind is VarKind.FLOW and node.find("non_negative") is not None:
            self.warn(node, "ignored_flow_non_negative",
                      f"non_negative on flow '{name}' is ignored (stocks only)")
        table = self.parse_gf(node, name)
        eqn_node = node.find("eqn")
        if table is not None:
            self.tables[name] = table
            if eqn_node is not None and eqn_node.text.strip():
                arg = self.parse_eqn(node, name)
                if arg is None:
                    return
            else:
                arg = TimeRef()  # gf with no input is driven by model time
            equation: Optional[Expr] = Lookup(name, arg)
        else:
            equation = self.parse_eqn(node, name)
            if equation is None:
                return
        units_node = node.find("units")
        units = units_node.text.strip() if units_node is not None else None
        limits = self.parse_limits(node)

        literal = ir.literal_value(equation) if kind is VarKind.AUX and table is None else None
        if literal is not None:
            var = Variable(name=name, kind=VarKind.CONST, value=literal,
                           units=units, limits=limits)
        else:
            var = Variable(name=name, kind=kind, equation=equation,
                           units=units, limits=limits)
        self.register(node, var)


def parse_xmile(source: str) -> ParseResult:
    """Parse an XMILE document into a validated model.

    On failure the result carries at least one error diagnostic and no
    model; a partial IR is never returned.
    """
    return _DocParser().parse(source)


def load_model(path: Union[str, Path]) -> ir.ModelIR:
    """Parse the XMILE file at ``path``; raise :class:`XmileError` on failure."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read model file {path}: {exc}") from exc
    result = parse_xmile(text)
    if result.model is None:
        raise XmileError(result.diagnostics)
    return result.model
