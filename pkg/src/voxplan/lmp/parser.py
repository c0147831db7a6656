"""Parser for the constrained map-composition language.

The language is line-oriented: assignments, expression statements, and
`return`, with `for`/`if` blocks closed by `end`. There is no `while`, no
function definition, and no attribute assignment, so every loop is bounded
by the length of a runtime list and programs cannot rebind the API. Calls
are permitted only on whitelisted names and are rejected at parse time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ParseError, UnboundedLoopError, UnknownCallError

# Every callable name a program may reference, across all program kinds.
CALL_WHITELIST = frozenset(
    {
        "detect",
        "execute",
        "cm2index",
        "index2cm",
        "pointat2quat",
        "set_voxel_by_radius",
        "set_voxel_by_box",
        "set_voxel_by_halfspace",
        "get_empty_affordance_map",
        "get_empty_avoidance_map",
        "get_empty_rotation_map",
        "get_empty_gripper_map",
        "get_empty_velocity_map",
        "get_affordance_map",
        "get_avoidance_map",
        "get_rotation_map",
        "get_velocity_map",
        "get_gripper_map",
        "reset_to_default_pose",
        "world_to_voxel",
        "vec",
        "normalize",
        "dist",
        "norm",
        "len",
        "min",
        "max",
        "abs",
        "ee",
    }
)

KEYWORDS = {"for", "in", "if", "else", "end", "return", "and", "or", "not", "true", "false"}
FORBIDDEN = {
    "while": "unbounded loops are not part of the language",
    "def": "function definition is not part of the language",
    "lambda": "function definition is not part of the language",
    "class": "class definition is not part of the language",
    "import": "imports are not part of the language",
    "exec": "dynamic execution is not part of the language",
    "eval": "dynamic execution is not part of the language",
    "global": "scope manipulation is not part of the language",
    "nonlocal": "scope manipulation is not part of the language",
    "yield": "generators are not part of the language",
    "with": "context managers are not part of the language",
    "try": "exception handling is not part of the language",
    "raise": "exception handling is not part of the language",
}

_SYMBOLS = ["==", "!=", "<=", ">=", "(", ")", "[", "]", ",", ".", ":", "=", "<", ">", "+", "-", "*", "/"]


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT NUMBER STRING SYM NEWLINE EOF
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    for line_no, raw in enumerate(source.split("\n"), start=1):
        line = raw.split("#", 1)[0]
        i = 0
        emitted = False
        while i < len(line):
            ch = line[i]
            if ch in " \t":
                i += 1
                continue
            col = i + 1
            if ch.isdigit() or (ch == "." and i + 1 < len(line) and line[i + 1].isdigit()):
                j = i
                while j < len(line) and (line[j].isdigit() or line[j] == "."):
                    j += 1
                tokens.append(Token("NUMBER", line[i:j], line_no, col))
                i = j
            elif ch.isalpha() or ch == "_":
                j = i
                while j < len(line) and (line[j].isalnum() or line[j] == "_"):
                    j += 1
                tokens.append(Token("IDENT", line[i:j], line_no, col))
                i = j
            elif ch in "\"'":
                j = line.find(ch, i + 1)
                if j < 0:
                    raise ParseError("unterminated string literal", line_no, col)
                tokens.append(Token("STRING", line[i + 1 : j], line_no, col))
                i = j + 1
            else:
                for sym in _SYMBOLS:
                    if line.startswith(sym, i):
                        tokens.append(Token("SYM", sym, line_no, col))
                        i += len(sym)
                        break
                else:
                    raise ParseError(f"unexpected character {ch!r}", line_no, col)
            emitted = True
        if emitted:
            tokens.append(Token("NEWLINE", "", line_no, len(line) + 1))
    tokens.append(Token("EOF", "", len(source.split("\n")) + 1, 1))
    return tokens


# -- AST nodes -------------------------------------------------------------


@dataclass(frozen=True)
class Node:
    line: int = field(default=0, compare=False, kw_only=True)


@dataclass(frozen=True)
class Num(Node):
    value: float


@dataclass(frozen=True)
class Str(Node):
    value: str


@dataclass(frozen=True)
class Bool(Node):
    value: bool


@dataclass(frozen=True)
class Name(Node):
    id: str


@dataclass(frozen=True)
class ListLit(Node):
    items: tuple


@dataclass(frozen=True)
class UnaryOp(Node):
    op: str
    operand: Node


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Compare(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class BoolOp(Node):
    op: str  # and | or
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    func: str
    args: tuple
    kwargs: tuple  # of (name, expr)


@dataclass(frozen=True)
class Index(Node):
    obj: Node
    index: Node


@dataclass(frozen=True)
class Attr(Node):
    obj: Node
    name: str


@dataclass(frozen=True)
class Assign(Node):
    target: str
    value: Node


@dataclass(frozen=True)
class ExprStmt(Node):
    value: Node


@dataclass(frozen=True)
class For(Node):
    var: str
    iterable: Node
    body: tuple


@dataclass(frozen=True)
class If(Node):
    cond: Node
    body: tuple
    orelse: tuple


@dataclass(frozen=True)
class Return(Node):
    value: Node | None


@dataclass(frozen=True)
class Program(Node):
    body: tuple


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text or kind
            raise ParseError(f"expected {want!r}, found {tok.text or tok.kind!r}", tok.line, tok.col)
        return self.advance()

    def skip_newlines(self) -> None:
        while self.peek().kind == "NEWLINE":
            self.advance()

    def at_ident(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "IDENT" and tok.text == word

    def parse_program(self) -> Program:
        body = []
        self.skip_newlines()
        while self.peek().kind != "EOF":
            body.append(self.parse_stmt())
            self.skip_newlines()
        return Program(body=tuple(body))

    def parse_block(self, *terminators: str) -> tuple[tuple, str]:
        body = []
        self.skip_newlines()
        while True:
            tok = self.peek()
            if tok.kind == "EOF":
                raise ParseError("block not closed before end of program", tok.line, tok.col)
            if tok.kind == "IDENT" and tok.text in terminators:
                word = tok.text
                self.advance()
                return tuple(body), word
            body.append(self.parse_stmt())
            self.skip_newlines()
        raise AssertionError

    def parse_stmt(self) -> Node:
        tok = self.peek()
        if tok.kind == "IDENT" and tok.text in FORBIDDEN:
            err = UnboundedLoopError if tok.text == "while" else ParseError
            raise err(f"{tok.text!r} is forbidden: {FORBIDDEN[tok.text]}", tok.line, tok.col)
        if self.at_ident("for"):
            return self.parse_for()
        if self.at_ident("if"):
            return self.parse_if()
        if self.at_ident("return"):
            line = self.advance().line
            if self.peek().kind == "NEWLINE":
                self.advance()
                return Return(value=None, line=line)
            value = self.parse_expr()
            self.expect("NEWLINE")
            return Return(value=value, line=line)
        # assignment or expression statement
        if (
            tok.kind == "IDENT"
            and tok.text not in KEYWORDS
            and self.tokens[self.pos + 1].kind == "SYM"
            and self.tokens[self.pos + 1].text == "="
        ):
            name = self.advance().text
            self.advance()  # '='
            value = self.parse_expr()
            self.expect("NEWLINE")
            return Assign(target=name, value=value, line=tok.line)
        value = self.parse_expr()
        self.expect("NEWLINE")
        return ExprStmt(value=value, line=tok.line)

    def parse_for(self) -> For:
        line = self.expect("IDENT", "for").line
        var = self.expect("IDENT").text
        if var in KEYWORDS or var in FORBIDDEN:
            raise ParseError(f"cannot bind loop variable named {var!r}", line, 0)
        self.expect("IDENT", "in")
        iterable = self.parse_expr()
        self.expect("SYM", ":")
        self.expect("NEWLINE")
        body, _ = self.parse_block("end")
        self.expect("NEWLINE")
        return For(var=var, iterable=iterable, body=body, line=line)

    def parse_if(self) -> If:
        line = self.expect("IDENT", "if").line
        cond = self.parse_expr()
        self.expect("SYM", ":")
        self.expect("NEWLINE")
        body, word = self.parse_block("end", "else")
        orelse: tuple = ()
        if word == "else":
            self.expect("SYM", ":")
            self.expect("NEWLINE")
            orelse, _ = self.parse_block("end")
        self.expect("NEWLINE")
        return If(cond=cond, body=body, orelse=orelse, line=line)

    # Expression grammar: or > and > not > comparison > additive > term > unary > postfix.

    def parse_expr(self) -> Node:
        return self.parse_or()

    def parse_or(self) -> Node:
        left = self.parse_and()
        while self.at_ident("or"):
            line = self.advance().line
            left = BoolOp(op="or", left=left, right=self.parse_and(), line=line)
        return left

    def parse_and(self) -> Node:
        left = self.parse_not()
        while self.at_ident("and"):
            line = self.advance().line
            left = BoolOp(op="and", left=left, right=self.parse_not(), line=line)
        return left

    def parse_not(self) -> Node:
        if self.at_ident("not"):
            line = self.advance().line
            return UnaryOp(op="not", operand=self.parse_not(), line=line)
        return self.parse_comparison()

    def parse_comparison(self) -> Node:
        left = self.parse_additive()
        tok = self.peek()
        if tok.kind == "SYM" and tok.text in ("==", "!=", "<", "<=", ">", ">="):
            op = self.advance().text
            return Compare(op=op, left=left, right=self.parse_additive(), line=tok.line)
        return left

    def parse_additive(self) -> Node:
        left = self.parse_term()
        while self.peek().kind == "SYM" and self.peek().text in ("+", "-"):
            op = self.advance()
            left = BinOp(op=op.text, left=left, right=self.parse_term(), line=op.line)
        return left

    def parse_term(self) -> Node:
        left = self.parse_unary()
        while self.peek().kind == "SYM" and self.peek().text in ("*", "/"):
            op = self.advance()
            left = BinOp(op=op.text, left=left, right=self.parse_unary(), line=op.line)
        return left

    def parse_unary(self) -> Node:
        tok = self.peek()
        if tok.kind == "SYM" and tok.text == "-":
            self.advance()
            return UnaryOp(op="-", operand=self.parse_unary(), line=tok.line)
        return self.parse_postfix()

    def parse_postfix(self) -> Node:
        node = self.parse_atom()
        while True:
            tok = self.peek()
            if tok.kind == "SYM" and tok.text == "(":
                if not isinstance(node, Name):
                    raise ParseError("only named functions can be called", tok.line, tok.col)
                if node.id not in CALL_WHITELIST:
                    raise UnknownCallError(
                        f"call to {node.id!r} is not in the API whitelist", tok.line, tok.col
                    )
                self.advance()
                args, kwargs = self.parse_args()
                node = Call(func=node.id, args=args, kwargs=kwargs, line=tok.line)
            elif tok.kind == "SYM" and tok.text == "[":
                self.advance()
                index = self.parse_expr()
                self.expect("SYM", "]")
                node = Index(obj=node, index=index, line=tok.line)
            elif tok.kind == "SYM" and tok.text == ".":
                self.advance()
                name = self.expect("IDENT").text
                node = Attr(obj=node, name=name, line=tok.line)
            else:
                return node

    def parse_args(self) -> tuple[tuple, tuple]:
        args: list[Node] = []
        kwargs: list[tuple[str, Node]] = []
        if self.peek().kind == "SYM" and self.peek().text == ")":
            self.advance()
            return tuple(args), tuple(kwargs)
        while True:
            tok = self.peek()
            if (
                tok.kind == "IDENT"
                and tok.text not in KEYWORDS
                and self.tokens[self.pos + 1].kind == "SYM"
                and self.tokens[self.pos + 1].text == "="
            ):
                name = self.advance().text
                self.advance()
                if kwargs and any(k == name for k, _ in kwargs):
                    raise ParseError(f"duplicate keyword argument {name!r}", tok.line, tok.col)
                kwargs.append((name, self.parse_expr()))
            else:
                if kwargs:
                    raise ParseError("positional argument after keyword argument", tok.line, tok.col)
                args.append(self.parse_expr())
            tok = self.peek()
            if tok.kind == "SYM" and tok.text == ",":
                self.advance()
                continue
            self.expect("SYM", ")")
            return tuple(args), tuple(kwargs)

    def parse_atom(self) -> Node:
        tok = self.peek()
        if tok.kind == "NUMBER":
            self.advance()
            try:
                value = float(tok.text)
            except ValueError:
                raise ParseError(f"bad number literal {tok.text!r}", tok.line, tok.col)
            return Num(value=value, line=tok.line)
        if tok.kind == "STRING":
            self.advance()
            return Str(value=tok.text, line=tok.line)
        if tok.kind == "IDENT":
            if tok.text in FORBIDDEN:
                err = UnboundedLoopError if tok.text == "while" else ParseError
                raise err(f"{tok.text!r} is forbidden: {FORBIDDEN[tok.text]}", tok.line, tok.col)
            if tok.text in ("true", "false"):
                self.advance()
                return Bool(value=tok.text == "true", line=tok.line)
            if tok.text in KEYWORDS:
                raise ParseError(f"unexpected keyword {tok.text!r}", tok.line, tok.col)
            self.advance()
            return Name(id=tok.text, line=tok.line)
        if tok.kind == "SYM" and tok.text == "(":
            self.advance()
            node = self.parse_expr()
            self.expect("SYM", ")")
            return node
        if tok.kind == "SYM" and tok.text == "[":
            self.advance()
            items = []
            if not (self.peek().kind == "SYM" and self.peek().text == "]"):
                while True:
                    items.append(self.parse_expr())
                    if self.peek().kind == "SYM" and self.peek().text == ",":
                        self.advance()
                        continue
                    break
            self.expect("SYM", "]")
            return ListLit(items=tuple(items), line=tok.line)
        raise ParseError(f"unexpected token {tok.text or tok.kind!r}", tok.line, tok.col)


def parse_program(source: str) -> Program:
    """Parse source text; raises ParseError and friends with line/column info."""
    return _Parser(tokenize(source)).parse_program()


# -- printer ---------------------------------------------------------------


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def expr_source(node: Node) -> str:
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Str):
        return f'"{node.value}"'
    if isinstance(node, Bool):
        return "true" if node.value else "false"
    if isinstance(node, Name):
        return node.id
    if isinstance(node, ListLit):
        return "[" + ", ".join(expr_source(i) for i in node.items) + "]"
    if isinstance(node, UnaryOp):
        if node.op == "not":
            return f"(not {expr_source(node.operand)})"
        return f"(-{expr_source(node.operand)})"
    if isinstance(node, (BinOp, Compare, BoolOp)):
        return f"({expr_source(node.left)} {node.op} {expr_source(node.right)})"
    if isinstance(node, Call):
        parts = [expr_source(a) for a in node.args]
        parts += [f"{k}={expr_source(v)}" for k, v in node.kwargs]
        return f"{node.func}({', '.join(parts)})"
    if isinstance(node, Index):
        return f"{expr_source(node.obj)}[{expr_source(node.index)}]"
    if isinstance(node, Attr):
        return f"{expr_source(node.obj)}.{node.name}"
    raise TypeError(f"not an expression node: {node}")


def _stmt_lines(node: Node, indent: int) -> list[str]:
    pad = "    " * indent
    if isinstance(node, Assign):
        return [f"{pad}{node.target} = {expr_source(node.value)}"]
    if isinstance(node, ExprStmt):
        return [f"{pad}{expr_source(node.value)}"]
    if isinstance(node, Return):
        if node.value is None:
            return [f"{pad}return"]
        return [f"{pad}return {expr_source(node.value)}"]
    if isinstance(node, For):
        lines = [f"{pad}for {node.var} in {expr_source(node.iterable)}:"]
        for s in node.body:
            lines.extend(_stmt_lines(s, indent + 1))
        lines.append(f"{pad}end")
        return lines
    if isinstance(node, If):
        lines = [f"{pad}if {expr_source(node.cond)}:"]
        for s in node.body:
            lines.extend(_stmt_lines(s, indent + 1))
        if node.orelse:
            lines.append(f"{pad}else:")
            for s in node.orelse:
                lines.extend(_stmt_lines(s, indent + 1))
        lines.append(f"{pad}end")
        return lines
    raise TypeError(f"not a statement node: {node}")


def program_source(program: Program) -> str:
    """Print an AST back to parseable source (parse -> print -> parse is identity)."""
    lines: list[str] = []
    for stmt in program.body:
        lines.extend(_stmt_lines(stmt, 0))
    return "\n".join(lines) + "\n"
