"""LP-format model reader/writer for anonymization.

Covers the common dialect: an objective section (Minimize/Maximize), Subject
To constraints, Bounds, General/Binary integrality lists, End. Comments run
from a backslash to end of line and are removed. Coefficient, right-hand-side
and bound texts are preserved verbatim; only identifiers are renamed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..errors import SanitizerError
from .namemap import NameMap, file_digest

_TOKEN_RE = re.compile(
    r"(?P<comment>\\[^\n]*)"
    r"|(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_.#$%&\[\]]*)"
    r"|(?P<op><=|>=|=<|=>|[<>=+\-:])"
    r"|(?P<newline>\n)"
    r"|(?P<space>[ \t\r]+)"
)

OBJECTIVE_KEYWORDS = {"minimize": "min", "min": "min", "maximize": "max", "max": "max",
                      "minimise": "min", "maximise": "max"}
SUBJECT_KEYWORDS = ("subject", "st", "s.t.", "such")
SECTION_KEYWORDS = {"bounds": "bounds", "general": "general", "generals": "general",
                    "gen": "general", "integer": "general", "integers": "general",
                    "binary": "binary", "binaries": "binary", "bin": "binary",
                    "end": "end", "free": None, "inf": None, "infinity": None}


@dataclass
class Token:
    kind: str  # number | name | op | newline
    text: str
    line: int
    col: int


def tokenize_lp(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise SanitizerError(f"unexpected character {text[pos]!r}", line=line, column=col)
        kind = m.lastgroup
        value = m.group(0)
        if kind == "number" or kind == "name":
            tokens.append(Token(kind, value, line, col))
        elif kind == "op":
            tokens.append(Token("op", {"=<": "<=", "=>": ">="}.get(value, value), line, col))
        elif kind == "newline":
            tokens.append(Token("newline", "\n", line, col))
            line += 1
            col = 0
        pos = m.end()
        col += len(value)
    return tokens


@dataclass
class Term:
    sign: int  # +1 / -1
    coeff_text: str | None  # None means implicit 1
    var: str | None  # None means a constant term

    def value(self) -> float:
        c = float(self.coeff_text) if self.coeff_text is not None else 1.0
        return self.sign * c


@dataclass
class Constraint:
    label: str | None
    terms: list[Term]
    sense: str  # <= | >= | =
    rhs_sign: int
    rhs_text: str

    def rhs_value(self) -> float:
        return self.rhs_sign * float(self.rhs_text)


@dataclass
class BoundLine:
    var: str
    lo_text: str | None = None  # numeric text, "-inf", or None
    lo_sign: int = 1
    up_text: str | None = None
    up_sign: int = 1
    fix_text: str | None = None
    fix_sign: int = 1
    free: bool = False


@dataclass
class LpModel:
    sense: str = "min"
    objective_label: str | None = None
    objective_terms: list[Term] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    bounds: list[BoundLine] = field(default_factory=list)
    generals: list[str] = field(default_factory=list)
    binaries: list[str] = field(default_factory=list)

    def variable_order(self) -> list[str]:
        seen: list[str] = []
        have = set()

        def add(name: str | None):
            if name and name not in have:
                have.add(name)
                seen.append(name)

        for t in self.objective_terms:
            add(t.var)
        for c in self.constraints:
            for t in c.terms:
                add(t.var)
        for b in self.bounds:
            add(b.var)
        for n in self.generals + self.binaries:
            add(n)
        return seen

    def folded_terms(self, terms: list[Term]) -> dict[str, float]:
        acc: dict[str, float] = {}
        for t in terms:
            if t.var is not None:
                acc[t.var] = acc.get(t.var, 0.0) + t.value()
        return acc


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self, skip_newlines: bool = True) -> Token | None:
        j = self.i
        while j < len(self.tokens):
            if skip_newlines and self.tokens[j].kind == "newline":
                j += 1
                continue
            return self.tokens[j]
        return None

    def next(self, skip_newlines: bool = True) -> Token | None:
        while self.i < len(self.tokens):
            tok = self.tokens[self.i]
            self.i += 1
            if skip_newlines and tok.kind == "newline":
                continue
            return tok
        return None

    def error(self, message: str, tok: Token | None = None):
        tok = tok or (self.tokens[self.i - 1] if self.i else None)
        raise SanitizerError(message, line=tok.line if tok else None,
                             column=tok.col if tok else None)


def _is_section_start(parser: _Parser, tok: Token) -> str | None:
    """Classify a name token as a section keyword (constraints sections are
    matched in parse_lp; this covers bounds/general/binary/end)."""
    low = tok.text.lower()
    if low in ("bounds", "general", "generals", "gen", "integer", "integers",
               "binary", "binaries", "bin", "end"):
        return SECTION_KEYWORDS[low]
    return None


def _match_subject_to(parser: _Parser) -> bool:
    tok = parser.peek()
    if tok is None or tok.kind != "name":
        return False
    low = tok.text.lower()
    if low == "subject" or low == "such":
        parser.next()
        nxt = parser.next()
        if nxt is None or nxt.text.lower() not in ("to", "that"):
            parser.error("expected 'to' after 'subject'", nxt)
        return True
    if low == "st":
        parser.next()
        return True
    if low == "s":
        # 's.t.' tokenizes as  s . t .  only if dots were allowed; here name
        # chars include '.', so 's.t.' arrives as a single name token
        return False
    return False


def _parse_terms(parser: _Parser) -> list[Term]:
    """Linear expression: [+|-] [coeff] var | [+|-] const, until a sense
    operator or a section boundary."""
    terms: list[Term] = []
    while True:
        tok = parser.peek()
        if tok is None or tok.kind == "op" and tok.text in ("<=", ">=", "=", "<", ">"):
            return terms
        if tok.kind == "name":
            low = tok.text.lower()
            if low in ("bounds", "general", "generals", "gen", "integer", "integers",
                       "binary", "binaries", "bin", "end", "subject", "such", "st"):
                return terms
        sign = 1
        while tok is not None and tok.kind == "op" and tok.text in ("+", "-"):
            parser.next()
            if tok.text == "-":
                sign = -sign
            tok = parser.peek()
        if tok is None:
            return terms
        if tok.kind == "number":
            parser.next()
            nxt = parser.peek()
            if nxt is not None and nxt.kind == "name" and not _is_lp_keyword(nxt.text):
                parser.next()
                terms.append(Term(sign=sign, coeff_text=tok.text, var=nxt.text))
            else:
                terms.append(Term(sign=sign, coeff_text=tok.text, var=None))
        elif tok.kind == "name":
            if _is_lp_keyword(tok.text):
                return terms
            parser.next()
            terms.append(Term(sign=sign, coeff_text=None, var=tok.text))
        else:
            parser.error(f"unexpected token {tok.text!r} in expression", tok)


def _is_lp_keyword(name: str) -> bool:
    low = name.lower()
    return low in ("bounds", "general", "generals", "gen", "integer", "integers", "binary",
                   "binaries", "bin", "end", "subject", "such", "st", "free", "inf", "infinity")


def parse_lp(text: str) -> LpModel:
    tokens = tokenize_lp(text)
    parser = _Parser(tokens)
    model = LpModel()

    tok = parser.next()
    if tok is None:
        raise SanitizerError("empty LP file")
    if tok.kind != "name" or tok.text.lower() not in OBJECTIVE_KEYWORDS:
        parser.error(f"expected an objective sense keyword, got {tok.text!r}", tok)
    model.sense = OBJECTIVE_KEYWORDS[tok.text.lower()]

    # optional objective label
    tok = parser.peek()
    if tok is not None and tok.kind == "name" and not _is_lp_keyword(tok.text):
        save = parser.i
        name_tok = parser.next()
        colon = parser.peek()
        if colon is not None and colon.kind == "op" and colon.text == ":":
            parser.next()
            model.objective_label = name_tok.text
        else:
            parser.i = save
    model.objective_terms = _parse_terms(parser)

    if not _match_subject_to(parser):
        nxt = parser.peek()
        if nxt is not None and nxt.kind == "name" and nxt.text.lower() == "s.t.":
            parser.next()
        elif nxt is not None and _is_section_start(parser, nxt):
            pass  # unconstrained model
        else:
            parser.error("expected 'Subject To'", nxt)

    # constraints until a section keyword
    while True:
        tok = parser.peek()
        if tok is None:
            break
        if tok.kind == "name" and _is_section_start(parser, tok):
            break
        label = None
        if tok.kind == "name" and not _is_lp_keyword(tok.text):
            save = parser.i
            name_tok = parser.next()
            colon = parser.peek()
            if colon is not None and colon.kind == "op" and colon.text == ":":
                parser.next()
                label = name_tok.text
            else:
                parser.i = save
        terms = _parse_terms(parser)
        sense_tok = parser.next()
        if sense_tok is None or sense_tok.kind != "op" or sense_tok.text in ("+", "-", ":"):
            parser.error("expected a constraint sense (<=, >=, =)", sense_tok)
        sense = {"<": "<=", ">": ">="}.get(sense_tok.text, sense_tok.text)
        rhs_sign = 1
        rhs_tok = parser.next()
        while rhs_tok is not None and rhs_tok.kind == "op" and rhs_tok.text in ("+", "-"):
            if rhs_tok.text == "-":
                rhs_sign = -rhs_sign
            rhs_tok = parser.next()
        if rhs_tok is None or rhs_tok.kind != "number":
            parser.error("expected a numeric right-hand side", rhs_tok)
        model.constraints.append(Constraint(label=label, terms=terms, sense=sense,
                                            rhs_sign=rhs_sign, rhs_text=rhs_tok.text))

    # remaining sections
    section = None
    while True:
        tok = parser.next()
        if tok is None:
            break
        if tok.kind == "name":
            s = _is_section_start(parser, tok)
            if s == "end":
                break
            if s is not None:
                section = s
                continue
        if section == "bounds":
            parser.i -= 1
            model.bounds.append(_parse_bound_line(parser))
        elif section in ("general", "binary"):
            if tok.kind != "name":
                parser.error(f"expected a variable name in {section} section", tok)
            (model.generals if section == "general" else model.binaries).append(tok.text)
        else:
            parser.error(f"unexpected token {tok.text!r}", tok)
    return model


def _read_signed_value(parser: _Parser) -> tuple[int, str]:
    sign = 1
    tok = parser.next()
    while tok is not None and tok.kind == "op" and tok.text in ("+", "-"):
        if tok.text == "-":
            sign = -sign
        tok = parser.next()
    if tok is None or tok.kind not in ("number", "name"):
        raise SanitizerError("expected a bound value", line=tok.line if tok else None)
    if tok.kind == "name":
        if tok.text.lower() not in ("inf", "infinity"):
            raise SanitizerError(f"expected a bound value, got {tok.text!r}", line=tok.line)
        return sign, "inf"
    return sign, tok.text


def _parse_bound_line(parser: _Parser) -> BoundLine:
    """One bounds statement: value <= var [<= value] | var <= value |
    var >= value | var = value | var free."""
    tok = parser.peek()
    if tok is None:
        raise SanitizerError("dangling bounds section")
    if tok.kind in ("number",) or (tok.kind == "op" and tok.text in ("+", "-")) or (
            tok.kind == "name" and tok.text.lower() in ("inf", "infinity")):
        lo_sign, lo_text = _read_signed_value(parser)
        op = parser.next()
        if op is None or op.kind != "op" or op.text not in ("<=", "<"):
            parser.error("expected <= after a lower bound", op)
        var_tok = parser.next()
        if var_tok is None or var_tok.kind != "name":
            parser.error("expected a variable name in bound", var_tok)
        bound = BoundLine(var=var_tok.text, lo_text=lo_text, lo_sign=lo_sign)
        nxt = parser.peek()
        if nxt is not None and nxt.kind == "op" and nxt.text in ("<=", "<"):
            parser.next()
            up_sign, up_text = _read_signed_value(parser)
            bound.up_text = up_text
            bound.up_sign = up_sign
        return bound
    if tok.kind != "name":
        parser.error(f"malformed bound line at {tok.text!r}", tok)
    var_tok = parser.next()
    nxt = parser.peek()
    if nxt is not None and nxt.kind == "name" and nxt.text.lower() == "free":
        parser.next()
        return BoundLine(var=var_tok.text, free=True)
    if nxt is None or nxt.kind != "op" or nxt.text not in ("<=", "<", ">=", ">", "="):
        parser.error("expected free, <=, >= or = in bound", nxt)
    parser.next()
    sign, text = _read_signed_value(parser)
    if nxt.text in ("<=", "<"):
        return BoundLine(var=var_tok.text, up_text=text, up_sign=sign)
    if nxt.text in (">=", ">"):
        return BoundLine(var=var_tok.text, lo_text=text, lo_sign=sign)
    return BoundLine(var=var_tok.text, fix_text=text, fix_sign=sign)


def _term_text(terms: list[Term], rename) -> str:
    parts: list[str] = []
    for i, t in enumerate(terms):
        sign = "-" if t.sign < 0 else "+"
        body = ""
        if t.coeff_text is not None:
            body = t.coeff_text
        if t.var is not None:
            body = (body + " " if body else "") + rename(t.var)
        if i == 0:
            parts.append(("- " if sign == "-" else "") + body)
        else:
            parts.append(f"{sign} {body}")
    return " ".join(parts) if parts else "0"


def _signed(sign: int, text: str) -> str:
    return ("-" if sign < 0 else "") + text


def write_lp(model: LpModel, rename_var=None, rename_con=None, rename_obj=None) -> str:
    rv = rename_var or (lambda n: n)
    rc = rename_con or (lambda n: n)
    ro = rename_obj or (lambda n: n)
    lines: list[str] = []
    lines.append("Minimize" if model.sense == "min" else "Maximize")
    label = f" {ro(model.objective_label)}:" if model.objective_label else ""
    lines.append(f"{label} {_term_text(model.objective_terms, rv)}".rstrip() or " 0")
    lines.append("Subject To")
    for c in model.constraints:
        label = f" {rc(c.label)}:" if c.label else ""
        lines.append(f"{label} {_term_text(c.terms, rv)} {c.sense} {_signed(c.rhs_sign, c.rhs_text)}")
    if model.bounds:
        lines.append("Bounds")
        for b in model.bounds:
            if b.free:
                lines.append(f" {rv(b.var)} free")
            elif b.fix_text is not None:
                lines.append(f" {rv(b.var)} = {_signed(b.fix_sign, b.fix_text)}")
            elif b.lo_text is not None and b.up_text is not None:
                lines.append(f" {_signed(b.lo_sign, b.lo_text)} <= {rv(b.var)} <= "
                             f"{_signed(b.up_sign, b.up_text)}")
            elif b.lo_text is not None:
                lines.append(f" {_signed(b.lo_sign, b.lo_text)} <= {rv(b.var)}")
            else:
                lines.append(f" {rv(b.var)} <= {_signed(b.up_sign, b.up_text)}")
    if model.generals:
        lines.append("General")
        for n in model.generals:
            lines.append(f" {rv(n)}")
    if model.binaries:
        lines.append("Binary")
        for n in model.binaries:
            lines.append(f" {rv(n)}")
    lines.append("End")
    return "\n".join(lines) + "\n"


def anonymize_lp_text(text: str, source_path=None) -> tuple[str, NameMap]:
    model = parse_lp(text)
    name_map = NameMap()
    if source_path is not None:
        name_map.digest = file_digest(source_path)
    if model.objective_label:
        name_map.add_objective(model.objective_label)
    for c in model.constraints:
        if c.label:
            name_map.add_constraint(c.label)
    for v in model.variable_order():
        name_map.add_variable(v)
    return (
        write_lp(
            model,
            rename_var=lambda n: name_map.variable(n) or n,
            rename_con=lambda n: name_map.constraint(n) or n,
            rename_obj=lambda n: "OBJ",
        ),
        name_map,
    )
