"""Parser, pretty-printer and validator for the datalog-like query language.

Grammar (informal)::

    program    := rule*
    rule       := head ":-" atom ("," atom)* [";" NAME "=" expr] "."
    head       := NAME "(" [vars] [";" NAME ":" TYPE] ")" ["*" ["[" "i" "=" INT "]"]]
    atom       := NAME "(" term ("," term)* ")"
    term       := NAME | STRING | NUMBER
    expr       := conventional arithmetic over numbers, scalar relation names
                  and one aggregate ``<<AGG(var)>>`` or ``<<COUNT(*)>>``

``#`` starts a comment that runs to the end of the line.  Strings may be quoted
with double quotes, single quotes or backquotes (a backquoted string may also
close with a single quote).
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Union

from ghdjoin.errors import (ArityMismatch, QuerySyntaxError, TypeMismatch,
                            UnknownRelation, UnsafeHeadVariable, ValidationError)

# -- AST --------------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    value: str


Term = Union[Var, Const]


@dataclass(frozen=True)
class Atom:
    relation: str
    terms: tuple[Term, ...]

    @property
    def variables(self) -> list[str]:
        return [t.name for t in self.terms if isinstance(t, Var)]


class AggOp(enum.Enum):
    SUM = "SUM"
    MIN = "MIN"
    MAX = "MAX"
    COUNT = "COUNT"


@dataclass(frozen=True)
class Num:
    value: Union[int, float]


@dataclass(frozen=True)
class Ref:
    """Reference to a scalar (zero-key) relation's annotation."""
    name: str


@dataclass(frozen=True)
class Agg:
    op: AggOp
    var: str | None  # None means ``*``


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


Expr = Union[Num, Ref, Agg, BinOp, Neg]


class RecursionKind(enum.Enum):
    NONE = "none"
    NAIVE = "naive"
    FIXPOINT = "fixpoint"


@dataclass(frozen=True)
class Recursion:
    kind: RecursionKind = RecursionKind.NONE
    iterations: int | None = None


NO_RECURSION = Recursion()

ANNOTATION_TYPES = ("int", "long", "float")


@dataclass(frozen=True)
class HeadAnnotation:
    alias: str
    type: str


@dataclass(frozen=True)
class Assignment:
    alias: str
    expr: Expr


@dataclass(frozen=True)
class Rule:
    head_name: str
    head_keys: tuple[str, ...]
    head_annotation: HeadAnnotation | None
    body: tuple[Atom, ...]
    annotation: Assignment | None = None
    recursion: Recursion = NO_RECURSION

    @property
    def annotation_expr(self) -> Expr | None:
        return None if self.annotation is None else self.annotation.expr


@dataclass(frozen=True)
class Program:
    rules: tuple[Rule, ...]

    def __iter__(self):
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)

    def __getitem__(self, i) -> Rule:
        return self.rules[i]


# -- lexer ------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<name>[0-9]*[A-Za-z_][A-Za-z0-9_']*)
  | (?P<number>[0-9]+\.[0-9]+|[0-9]+)
  | (?P<string>"[^"\n]*"|`[^`'\n]*[`']|'[^'\n]*')
  | (?P<op>:-|<<|>>|[(),;:.*\[\]=+\-/])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    line = 1
    line_start = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise QuerySyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1,
                                   _line_text(text, line_start))
        kind = m.lastgroup
        tok_text = m.group()
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, tok_text, line, pos - line_start + 1))
        nl = tok_text.count("\n")
        if nl:
            line += nl
            line_start = pos + tok_text.rfind("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


def _line_text(text: str, start: int) -> str:
    end = text.find("\n", start)
    return text[start:] if end < 0 else text[start:end]


# -- parser -----------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self, k: int = 0) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        lines = self.text.splitlines()
        src = lines[tok.line - 1] if 0 < tok.line <= len(lines) else ""
        raise QuerySyntaxError(msg, tok.line, tok.col, src)

    def take(self, kind: str | None = None, text: str | None = None) -> _Tok:
        tok = self.peek()
        if (kind is not None and tok.kind != kind) or (text is not None and tok.text != text):
            want = text if text is not None else kind
            got = tok.text or "end of input"
            self.error(f"expected {want!r}, found {got!r}", tok)
        self.i += 1
        return tok

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind == "op" and tok.text == text

    def program(self) -> Program:
        rules = []
        while self.peek().kind != "eof":
            rules.append(self.rule())
        return Program(tuple(rules))

    def rule(self) -> Rule:
        name = self.take("name").text
        self.take(text="(")
        keys: list[str] = []
        ann = None
        if not self.at(";") and not self.at(")"):
            keys.append(self.take("name").text)
            while self.at(","):
                self.i += 1
                keys.append(self.take("name").text)
        if self.at(";"):
            self.i += 1
            alias = self.take("name").text
            self.take(text=":")
            ty = self.take("name")
            if ty.text not in ANNOTATION_TYPES:
                self.error(f"unknown annotation type {ty.text!r}", ty)
            ann = HeadAnnotation(alias, ty.text)
        self.take(text=")")
        rec = NO_RECURSION
        if self.at("*"):
            self.i += 1
            rec = Recursion(RecursionKind.FIXPOINT)
            if self.at("["):
                self.i += 1
                self.take("name", "i")
                self.take(text="=")
                n = self.take("number")
                if "." in n.text or int(n.text) < 0:
                    self.error("iteration bound must be a non-negative integer", n)
                self.take(text="]")
                rec = Recursion(RecursionKind.NAIVE, int(n.text))
        self.take(text=":-")
        if self.at(".") or self.peek().kind == "eof" or self.at(";"):
            self.error("rule body must contain at least one atom")
        body = [self.atom()]
        while self.at(","):
            self.i += 1
            body.append(self.atom())
        assign = None
        if self.at(";"):
            self.i += 1
            alias = self.take("name").text
            self.take(text="=")
            assign = Assignment(alias, self.expr())
        self.take(text=".")
        return Rule(name, tuple(keys), ann, tuple(body), assign, rec)

    def atom(self) -> Atom:
        name = self.take("name").text
        self.take(text="(")
        terms = [self.term()]
        while self.at(","):
            self.i += 1
            terms.append(self.term())
        self.take(text=")")
        return Atom(name, tuple(terms))

    def term(self) -> Term:
        tok = self.peek()
        if tok.kind == "name":
            self.i += 1
            return Var(tok.text)
        if tok.kind == "string":
            self.i += 1
            return Const(tok.text[1:-1])
        if tok.kind == "number":
            self.i += 1
            return Const(tok.text)
        self.error(f"expected a variable or constant, found {tok.text or 'end of input'!r}")

    # precedence climbing: additive < multiplicative < unary < primary
    def expr(self) -> Expr:
        left = self.term_expr()
        while self.at("+") or self.at("-"):
            op = self.take().text
            left = BinOp(op, left, self.term_expr())
        return left

    def term_expr(self) -> Expr:
        left = self.unary()
        while self.at("*") or self.at("/"):
            op = self.take().text
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.at("-"):
            self.i += 1
            return Neg(self.unary())
        return self.primary()

    def primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.i += 1
            return Num(float(tok.text) if "." in tok.text else int(tok.text))
        if tok.kind == "name":
            self.i += 1
            return Ref(tok.text)
        if self.at("("):
            self.i += 1
            e = self.expr()
            self.take(text=")")
            return e
        if self.at("<<"):
            self.i += 1
            op_tok = self.take("name")
            try:
                op = AggOp(op_tok.text)
            except ValueError:
                self.error(f"unknown aggregate {op_tok.text!r}", op_tok)
            self.take(text="(")
            if self.at("*"):
                self.i += 1
                var = None
            else:
                var = self.take("name").text
            self.take(text=")")
            self.take(text=">>")
            return Agg(op, var)
        self.error(f"expected an expression, found {tok.text or 'end of input'!r}")


def parse_program(text: str) -> Program:
    """Parse query text into a Program, preserving rule order."""
    return _Parser(text).program()


# -- pretty printer ---------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _fmt_num(v) -> str:
    if isinstance(v, float):
        s = repr(v)
        if "e" in s or "E" in s or "inf" in s or "nan" in s:
            s = f"{v:.17f}".rstrip("0")
            if s.endswith("."):
                s += "0"
        return s
    return str(v)


def format_expr(e: Expr, parent_prec: int = 0, right: bool = False) -> str:
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Ref):
        return e.name
    if isinstance(e, Agg):
        return f"<<{e.op.value}({'*' if e.var is None else e.var})>>"
    if isinstance(e, Neg):
        return "-" + format_expr(e.operand, 3)
    p = _PREC[e.op]
    s = f"{format_expr(e.left, p)}{e.op}{format_expr(e.right, p, True)}"
    if p < parent_prec or (right and p == parent_prec):
        return f"({s})"
    return s


def _fmt_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    return '"' + t.value + '"'


def format_rule(r: Rule) -> str:
    head = ",".join(r.head_keys)
    if r.head_annotation is not None:
        head += f";{r.head_annotation.alias}:{r.head_annotation.type}"
    out = f"{r.head_name}({head})"
    if r.recursion.kind is RecursionKind.FIXPOINT:
        out += "*"
    elif r.recursion.kind is RecursionKind.NAIVE:
        out += f"*[i={r.recursion.iterations}]"
    body = ",".join(f"{a.relation}({','.join(_fmt_term(t) for t in a.terms)})" for a in r.body)
    out += f" :- {body}"
    if r.annotation is not None:
        out += f"; {r.annotation.alias}={format_expr(r.annotation.expr)}"
    return out + "."


def format_program(p: Program) -> str:
    return "\n".join(format_rule(r) for r in p.rules) + ("\n" if p.rules else "")


# -- validation -------------------------------------------------------------

class CatalogLike(Protocol):
    def has_relation(self, name: str) -> bool: ...
    def arity(self, name: str) -> int: ...
    def annotation_type(self, name: str) -> str | None: ...
    def encode_constant(self, value: str) -> int | None: ...


# relations synthesized from an edge relation when a program references them
DERIVED_RELATIONS = {"InvDeg": "inverse_degree"}


@dataclass(frozen=True)
class AtomIR:
    relation: str
    vars: tuple[str | None, ...]                 # per column; None for constants
    selections: tuple[tuple[int, str, int], ...]  # (column, raw value, encoded id or -1)
    intensional: bool = False
    recursive: bool = False
    derived: str | None = None                   # derivation kind, e.g. inverse_degree
    derived_from: str | None = None

    @property
    def arity(self) -> int:
        return len(self.vars)

    @property
    def variables(self) -> list[str]:
        seen: list[str] = []
        for v in self.vars:
            if v is not None and v not in seen:
                seen.append(v)
        return seen


@dataclass(frozen=True)
class RuleIR:
    rule: Rule
    index: int
    head_name: str
    head_keys: tuple[str, ...]
    annotation_type: str | None
    atoms: tuple[AtomIR, ...]
    variables: tuple[str, ...]          # first-appearance order
    aggregate: Agg | None
    expr: Expr | None
    scalar_refs: tuple[str, ...]
    recursion: Recursion
    seminaive: bool
    is_recursive: bool

    @property
    def name(self) -> str:
        return self.head_name


def _walk(e: Expr) -> Iterable[Expr]:
    yield e
    if isinstance(e, BinOp):
        yield from _walk(e.left)
        yield from _walk(e.right)
    elif isinstance(e, Neg):
        yield from _walk(e.operand)


def _numeric_kind(t: str | None) -> str:
    return "float" if t == "float" else "int"


@dataclass
class _Schema:
    arity: int
    annotation: str | None


def validate(program: Program, catalog: CatalogLike) -> list[RuleIR]:
    """Resolve relations, encode selections and type-check every rule.

    The catalog is only read.  Relations defined by earlier rule heads are
    visible to later rules.
    """
    defined: dict[str, _Schema] = {}
    out: list[RuleIR] = []
    for idx, rule in enumerate(program.rules):
        out.append(_validate_rule(idx, rule, catalog, defined))
        schema = _Schema(len(rule.head_keys),
                         rule.head_annotation.type if rule.head_annotation else None)
        prev = defined.get(rule.head_name)
        if prev is not None and (prev.arity != schema.arity or prev.annotation != schema.annotation):
            raise ArityMismatch(f"rule {idx}: {rule.head_name} redefined with a different schema")
        if prev is None and catalog.has_relation(rule.head_name):
            if catalog.arity(rule.head_name) != schema.arity:
                raise ArityMismatch(f"rule {idx}: head {rule.head_name} has arity {schema.arity}, "
                                    f"catalog relation has {catalog.arity(rule.head_name)}")
        defined[rule.head_name] = schema
    return out


def _validate_rule(idx: int, rule: Rule, catalog: CatalogLike,
                   defined: dict[str, _Schema]) -> RuleIR:
    where = f"rule {idx} ({rule.head_name})"
    body_names = {a.relation for a in rule.body}
    is_rec = rule.head_name in body_names
    if rule.recursion.kind is not RecursionKind.NONE:
        if not is_rec and rule.head_name not in defined:
            raise ValidationError(f"{where}: recursive rule needs its head in the body or a base rule")
    elif is_rec:
        raise ValidationError(f"{where}: rule references its own head; mark it with '*'")

    head_schema = _Schema(len(rule.head_keys),
                          rule.head_annotation.type if rule.head_annotation else None)

    def schema_of(name: str) -> _Schema | None:
        if name == rule.head_name and name not in defined:
            return head_schema
        if name in defined:
            return defined[name]
        if catalog.has_relation(name):
            return _Schema(catalog.arity(name), catalog.annotation_type(name))
        return None

    atoms: list[AtomIR] = []
    variables: list[str] = []
    pending_derived: list[int] = []
    for a in rule.body:
        schema = schema_of(a.relation)
        derived = None
        if schema is None:
            if a.relation in DERIVED_RELATIONS and len(a.terms) == 1:
                derived = DERIVED_RELATIONS[a.relation]
                schema = _Schema(1, "float")
            else:
                raise UnknownRelation(f"{where}: unknown relation {a.relation!r}")
        if schema.arity != len(a.terms):
            raise ArityMismatch(f"{where}: {a.relation} used with {len(a.terms)} terms, "
                                f"declared arity {schema.arity}")
        cols: list[str | None] = []
        sels: list[tuple[int, str, int]] = []
        for c, t in enumerate(a.terms):
            if isinstance(t, Var):
                cols.append(t.name)
                if t.name not in variables:
                    variables.append(t.name)
            else:
                enc = catalog.encode_constant(t.value)
                sels.append((c, t.value, -1 if enc is None else enc))
                cols.append(None)
        if derived is not None:
            pending_derived.append(len(atoms))
        atoms.append(AtomIR(a.relation, tuple(cols), tuple(sels),
                            intensional=a.relation in defined or a.relation == rule.head_name,
                            recursive=a.relation == rule.head_name,
                            derived=derived))
    for i in pending_derived:
        src = next((x.relation for x in atoms
                    if x.arity == 2 and x.derived is None and not x.intensional), None)
        if src is None:
            raise UnknownRelation(f"{where}: cannot derive {atoms[i].relation} without a binary "
                                  "edge relation in the body")
        a = atoms[i]
        atoms[i] = AtomIR(a.relation, a.vars, a.selections, derived=a.derived, derived_from=src)

    for k in rule.head_keys:
        if k not in variables:
            raise UnsafeHeadVariable(f"{where}: head variable {k!r} does not occur in the body")
    if len(set(rule.head_keys)) != len(rule.head_keys):
        raise ValidationError(f"{where}: repeated head variable")

    agg = None
    expr = None
    refs: list[str] = []
    ann_type = rule.head_annotation.type if rule.head_annotation else None
    if rule.annotation is not None:
        if rule.head_annotation is None:
            raise ValidationError(f"{where}: annotation expression without a head annotation")
        if rule.annotation.alias != rule.head_annotation.alias:
            raise ValidationError(f"{where}: annotation alias {rule.annotation.alias!r} does not "
                                  f"match head alias {rule.head_annotation.alias!r}")
        expr = rule.annotation.expr
        aggs = [n for n in _walk(expr) if isinstance(n, Agg)]
        if len(aggs) > 1:
            raise ValidationError(f"{where}: at most one aggregate per annotation expression")
        if aggs:
            agg = aggs[0]
            if agg.var is not None and agg.var not in variables:
                raise UnsafeHeadVariable(f"{where}: aggregate variable {agg.var!r} is not bound")
            if agg.var is None and agg.op is not AggOp.COUNT:
                raise ValidationError(f"{where}: only COUNT accepts '*'")
        for n in _walk(expr):
            if isinstance(n, Ref):
                s = schema_of(n.name)
                if s is None:
                    raise UnknownRelation(f"{where}: unknown scalar relation {n.name!r}")
                if s.arity != 0 or s.annotation is None:
                    raise TypeMismatch(f"{where}: {n.name!r} is not an annotated scalar relation")
                refs.append(n.name)
        body_ann = [schema_of(a.relation).annotation if a.derived is None else "float"
                    for a in atoms]
        t = _expr_type(expr, body_ann, schema_of)
        if _numeric_kind(ann_type) == "int" and t == "float":
            raise TypeMismatch(f"{where}: expression of type float assigned to {ann_type} annotation")
    elif rule.head_annotation is not None:
        raise ValidationError(f"{where}: annotated head requires an annotation expression")

    seminaive = (rule.recursion.kind is RecursionKind.FIXPOINT and agg is not None
                 and agg.op in (AggOp.MIN, AggOp.MAX))
    return RuleIR(rule=rule, index=idx, head_name=rule.head_name, head_keys=rule.head_keys,
                  annotation_type=ann_type, atoms=tuple(atoms), variables=tuple(variables),
                  aggregate=agg, expr=expr, scalar_refs=tuple(dict.fromkeys(refs)),
                  recursion=rule.recursion, seminaive=seminaive, is_recursive=is_rec)


def _expr_type(e: Expr, body_ann: list[str | None], schema_of) -> str:
    if isinstance(e, Num):
        return "float" if isinstance(e.value, float) else "int"
    if isinstance(e, Ref):
        return _numeric_kind(schema_of(e.name).annotation)
    if isinstance(e, Agg):
        if e.op is AggOp.COUNT:
            return "int"
        return "float" if any(t == "float" for t in body_ann) else "int"
    if isinstance(e, Neg):
        return _expr_type(e.operand, body_ann, schema_of)
    if e.op == "/":
        return "float"
    lt = _expr_type(e.left, body_ann, schema_of)
    rt = _expr_type(e.right, body_ann, schema_of)
    return "float" if "float" in (lt, rt) else "int"


__all__ = [
    "Agg", "AggOp", "Assignment", "Atom", "AtomIR", "BinOp", "Const", "Expr",
    "HeadAnnotation", "Neg", "Num", "Program", "Recursion", "RecursionKind",
    "Ref", "Rule", "RuleIR", "Var", "format_expr", "format_program",
    "format_rule", "parse_program", "validate",
]
