"""
TinySol 语法：抽象语法、词法/语法分析、打印器、栈文本与自由名

具体语法::

    contract Proxy : IP@L {
      field balance := 10;
      field impl := X;
      func send() { skip }
      func update(x) { if sender = this.owner then this.impl := x else skip }
      func fallback() { call this.impl.id()$value }
    }

    interface IP extends Itop {
      balance : int@L;  impl : IX@L;
      send : () -> cmd@L;  update : (IX@L) -> cmd@L;  fallback : () -> cmd@L;
    }

名字解析：已声明的合约名解析为地址字面量，已声明的方法名解析为方法名字面量，
this/sender/value/id/args 为魔术变量，其余标识符为普通变量。
"""

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Set, Tuple, Union

from errors import ParseError, ProgramError
from lattice_types import (
    ABSENT_METHOD, ITOP, MAGIC_NAMES, Addr, ArgsType, Delta, ExprType, InterfaceDecl,
    Lattice, MethodName, ProcType, TypeEnv, Value, VarType, base_from_name,
    check_gamma_wellformed, check_sigma_consistency, format_value, parse_lattice,
)

logger = logging.getLogger(__name__)


# =============================================================================
# 1. 抽象语法
# =============================================================================

@dataclass(frozen=True)
class Lit:
    value: Value


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Field:
    """e.p；e.balance 也表示为 Field(e, 'balance')"""
    target: 'Expr'
    name: str


@dataclass(frozen=True)
class Op:
    op: str
    args: Tuple['Expr', ...]


Expr = Union[Lit, Var, Field, Op]

ID_REF = 'id'   # 方法引用为魔术变量 id


@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Throw:
    pass


@dataclass(frozen=True)
class DeclVar:
    vtype: VarType
    name: str
    expr: Expr
    body: 'Stm'


@dataclass(frozen=True)
class AssignVar:
    name: str
    expr: Expr


@dataclass(frozen=True)
class AssignField:
    name: str
    expr: Expr


@dataclass(frozen=True)
class Seq:
    first: 'Stm'
    second: 'Stm'


@dataclass(frozen=True)
class If:
    cond: Expr
    then: 'Stm'
    orelse: 'Stm'


@dataclass(frozen=True)
class While:
    cond: Expr
    body: 'Stm'


@dataclass(frozen=True)
class Call:
    target: Expr
    method: str                 # 方法名或 ID_REF
    args: Tuple[Expr, ...]
    amount: Expr


@dataclass(frozen=True)
class DCall:
    target: Expr
    method: str
    args: Tuple[Expr, ...]


Stm = Union[Skip, Throw, DeclVar, AssignVar, AssignField, Seq, If, While, Call, DCall]
STATEMENT_TYPES = (Skip, Throw, DeclVar, AssignVar, AssignField, Seq, If, While, Call, DCall)

ARGS_ONLY = (Var('args'),)


def uses_args(args: Tuple[Expr, ...]) -> bool:
    return args == ARGS_ONLY


def seq(*stms: Stm) -> Stm:
    """右结合地串联语句"""
    if not stms:
        return Skip()
    result = stms[-1]
    for s in reversed(stms[:-1]):
        result = Seq(s, result)
    return result


# =============================================================================
# 2. 运行时变量环境与栈符号
# =============================================================================

@dataclass(frozen=True)
class VarEnv:
    """
    env_V：名字 → 值，条目按名字排序

    语法类型系统使用的变体中，let 声明的变量另外带类型注解 (v, B_s)；
    魔术变量与参数绑定不带注解。
    """
    bindings: Tuple[Tuple[str, Value], ...] = ()
    annotations: Tuple[Tuple[str, VarType], ...] = ()

    @classmethod
    def of(cls, values: Optional[Dict[str, Value]] = None,
           annotations: Optional[Dict[str, VarType]] = None) -> 'VarEnv':
        return cls(tuple(sorted((values or {}).items())), tuple(sorted((annotations or {}).items())))

    def get(self, name: str) -> Optional[Value]:
        for key, v in self.bindings:
            if key == name:
                return v
        return None

    def __contains__(self, name: str) -> bool:
        return any(key == name for key, _ in self.bindings)

    def names(self) -> List[str]:
        return [k for k, _ in self.bindings]

    def as_dict(self) -> Dict[str, Value]:
        return dict(self.bindings)

    def annotation(self, name: str) -> Optional[VarType]:
        return dict(self.annotations).get(name)

    def bind(self, name: str, value: Value, annotation: Optional[VarType] = None) -> 'VarEnv':
        values = self.as_dict()
        values[name] = value
        notes = dict(self.annotations)
        notes.pop(name, None)
        if annotation is not None:
            notes[name] = annotation
        return VarEnv.of(values, notes)

    def assign(self, name: str, value: Value) -> 'VarEnv':
        values = self.as_dict()
        values[name] = value
        return VarEnv(tuple(sorted(values.items())), self.annotations)

    def remove(self, name: str) -> 'VarEnv':
        return VarEnv(tuple((k, v) for k, v in self.bindings if k != name),
                      tuple((k, t) for k, t in self.annotations if k != name))

    def extract(self) -> Delta:
        """extract(env_V)：只保留带注解的条目"""
        return Delta.of(dict(self.annotations))

    def plain(self) -> 'VarEnv':
        return VarEnv(self.bindings)


@dataclass(frozen=True)
class Del:
    name: str


@dataclass(frozen=True)
class Ret:
    """返回符号 (env_V, Δ)；非类型化语义中 delta 为 None"""
    vars: VarEnv
    delta: Optional[Delta] = None


@dataclass(frozen=True)
class Lvl:
    level: str


Symbol = Union[Stm, Del, Ret, Lvl]
Stack = Tuple[Symbol, ...]
BOT: Stack = ()


def push(stm: Stm, rest: Stack = BOT) -> Stack:
    """把语句压栈；顶层 Seq 展开为相邻的栈符号（栈本身即顺序组合）"""
    if isinstance(stm, Seq):
        return push(stm.first, push(stm.second, rest))
    return (stm,) + tuple(rest)


# =============================================================================
# 3. 声明与程序
# =============================================================================

@dataclass(frozen=True)
class MethodDecl:
    name: str
    params: Tuple[str, ...]
    body: Stm


@dataclass(frozen=True)
class ContractDecl:
    """合约声明：字段以 balance 开头，方法以 send 开头，fallback 单独保存"""
    address: str
    interface: str
    level: str
    fields: Tuple[Tuple[str, Value], ...]
    methods: Tuple[MethodDecl, ...]
    fallback: Stm

    def method(self, name: str) -> Optional[MethodDecl]:
        for m in self.methods:
            if m.name == name:
                return m
        return None


@dataclass
class Program:
    """静态世界：合约声明 + Σ;Γ（含安全格）"""
    contracts: Tuple[ContractDecl, ...]
    tenv: TypeEnv
    sources: Tuple[str, str, str] = ('', '', '')
    method_names: Set[str] = field(default_factory=set)

    @property
    def lattice(self) -> Lattice:
        return self.tenv.lattice

    @property
    def addresses(self) -> Set[str]:
        return {c.address for c in self.contracts}

    def contract(self, address: Union[str, Addr]) -> Optional[ContractDecl]:
        key = address.name if isinstance(address, Addr) else address
        for c in self.contracts:
            if c.address == key:
                return c
        return None

    def names(self) -> '_Names':
        return _Names(set(self.tenv.addresses) | self.addresses,
                      set(self.method_names) | set(self.tenv.method_names()),
                      set(self.tenv.interfaces))


# =============================================================================
# 4. 词法分析
# =============================================================================

class Token(NamedTuple):
    kind: str      # 'num' | 'ident' | 'op' | 'eof'
    text: str
    line: int
    column: int


_TOKEN_RE = re.compile(r'''
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|<=|->|[(){};,:.$@=<+\-*\[\]|])
''', re.X)

KEYWORDS = {
    'contract', 'interface', 'extends', 'field', 'func', 'skip', 'throw', 'if', 'then',
    'else', 'while', 'do', 'let', 'in', 'call', 'dcall', 'and', 'or', 'not', 'true', 'false',
}


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if not match:
            raise ParseError(f"无法识别的字符 {text[pos]!r}", line, pos - line_start + 1)
        kind = match.lastgroup
        chunk = match.group()
        if kind != 'ws':
            tokens.append(Token(kind, chunk, line, pos - line_start + 1))
        newlines = chunk.count('\n')
        if newlines:
            line += newlines
            line_start = pos + chunk.rfind('\n') + 1
        pos = match.end()
    tokens.append(Token('eof', '', line, pos - line_start + 1))
    return tokens


@dataclass
class _Names:
    """名字解析所需的全局名字表"""
    addresses: Set[str]
    methods: Set[str]
    interfaces: Set[str]

    def is_method(self, name: str) -> bool:
        return name in self.methods or name.startswith('__m')


def _prescan(tokens: List[Token]) -> _Names:
    addresses, methods, interfaces = set(), set(), set()
    for i, tok in enumerate(tokens[:-1]):
        nxt = tokens[i + 1]
        if tok.kind == 'ident' and nxt.kind == 'ident':
            if tok.text == 'contract':
                addresses.add(nxt.text)
            elif tok.text == 'func':
                methods.add(nxt.text)
            elif tok.text == 'interface':
                interfaces.add(nxt.text)
        # 接口体内的方法成员：name : ( ... ) -> cmd
        if (tok.kind == 'ident' and nxt.text == ':' and i + 2 < len(tokens)
                and tokens[i + 2].text == '('):
            methods.add(tok.text)
    return _Names(addresses, methods, interfaces)


# =============================================================================
# 5. 语法分析
# =============================================================================

_CMP_OPS = ('=', '<', '<=')


class _Parser:
    def __init__(self, tokens: List[Token], names: _Names):
        self.tokens = tokens
        self.pos = 0
        self.names = names
        self.scope: List[str] = []

    # --- 基础 -----------------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def error(self, message: str, tok: Optional[Token] = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.column)

    def at(self, text: str) -> bool:
        return self.tok.kind in ('op', 'ident') and self.tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or '文件结尾'
            raise self.error(f"期望 {text!r}，得到 {found!r}")
        tok = self.tok
        self.pos += 1
        return tok

    def ident(self, what: str = '标识符') -> str:
        tok = self.tok
        if tok.kind != 'ident' or tok.text in KEYWORDS:
            raise self.error(f"期望{what}，得到 {tok.text or '文件结尾'!r}")
        self.pos += 1
        return tok.text

    def expect_eof(self) -> None:
        if self.tok.kind != 'eof':
            raise self.error(f"多余的输入 {self.tok.text!r}")

    # --- 类型 -----------------------------------------------------------------

    def var_type(self) -> VarType:
        base = self.ident('类型名')
        self.expect('@')
        level = self.ident('安全级别')
        return VarType(base_from_name(base), level)

    def member_type(self):
        if self.at('('):
            self.expect('(')
            params: List[VarType] = []
            if not self.at(')'):
                params.append(self.var_type())
                while self.accept(','):
                    params.append(self.var_type())
            self.expect(')')
            self.expect('->')
            if self.ident('cmd') != 'cmd':
                raise self.error("方法类型必须以 cmd@s 结尾", self.peek(-1))
            self.expect('@')
            return ProcType(tuple(params), self.ident('安全级别'))
        return self.var_type()

    def local_type(self):
        if self.accept('['):
            items: List[VarType] = []
            if not self.at(']'):
                items.append(self.var_type())
                while self.accept(','):
                    items.append(self.var_type())
            self.expect(']')
            return ArgsType(tuple(items))
        return self.var_type()

    # --- 值 -------------------------------------------------------------------

    def value(self) -> Value:
        tok = self.tok
        if self.accept('-'):
            if self.tok.kind != 'num':
                raise self.error("负号后必须是整数")
            self.pos += 1
            return -int(self.peek(-1).text)
        if tok.kind == 'num':
            self.pos += 1
            return int(tok.text)
        if self.accept('true'):
            return True
        if self.accept('false'):
            return False
        if self.accept('['):
            items: List[Value] = []
            if not self.at(']'):
                items.append(self.value())
                while self.accept(','):
                    items.append(self.value())
            self.expect(']')
            return tuple(items)
        name = self.ident('值')
        if name in self.names.addresses:
            return Addr(name)
        if self.names.is_method(name):
            return MethodName(name)
        raise self.error(f"未知的地址或方法名 {name}", tok)

    # --- 表达式 ---------------------------------------------------------------

    def expr(self) -> Expr:
        left = self.and_expr()
        while self.accept('or'):
            left = Op('or', (left, self.and_expr()))
        return left

    def and_expr(self) -> Expr:
        left = self.not_expr()
        while self.accept('and'):
            left = Op('and', (left, self.not_expr()))
        return left

    def not_expr(self) -> Expr:
        if self.accept('not'):
            return Op('not', (self.not_expr(),))
        return self.cmp_expr()

    def cmp_expr(self) -> Expr:
        left = self.add_expr()
        if self.tok.kind == 'op' and self.tok.text in _CMP_OPS:
            op = self.tok.text
            self.pos += 1
            left = Op(op, (left, self.add_expr()))
        return left

    def add_expr(self) -> Expr:
        left = self.mul_expr()
        while self.tok.kind == 'op' and self.tok.text in ('+', '-'):
            op = self.tok.text
            self.pos += 1
            left = Op(op, (left, self.mul_expr()))
        return left

    def mul_expr(self) -> Expr:
        left = self.postfix()
        while self.accept('*'):
            left = Op('*', (left, self.postfix()))
        return left

    def postfix(self) -> Expr:
        e = self.atom()
        while self.at('.'):
            self.expect('.')
            e = Field(e, self.ident('字段名'))
        return e

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == 'num':
            self.pos += 1
            return Lit(int(tok.text))
        if self.at('-') and self.peek().kind == 'num':
            self.pos += 2
            return Lit(-int(self.peek(-1).text))
        if self.accept('true'):
            return Lit(True)
        if self.accept('false'):
            return Lit(False)
        if self.accept('('):
            e = self.expr()
            self.expect(')')
            return e
        name = self.ident('表达式')
        return self.resolve(name, tok)

    def resolve(self, name: str, tok: Token) -> Expr:
        if name == 'args':
            raise self.error("args 只能作为调用的完整参数列表出现", tok)
        if name in MAGIC_NAMES or name in self.scope:
            return Var(name)
        if name in self.names.addresses:
            return Lit(Addr(name))
        if self.names.is_method(name):
            return Lit(MethodName(name))
        return Var(name)

    def check_binder(self, name: str, tok: Token) -> None:
        if name in MAGIC_NAMES:
            raise self.error(f"不能绑定保留名 {name}", tok)
        if name in self.names.addresses or self.names.is_method(name) or name in self.names.interfaces:
            raise self.error(f"变量名 {name} 与地址/方法/接口名冲突", tok)

    # --- 语句 -----------------------------------------------------------------

    def stm(self) -> Stm:
        first = self.simple()
        if self.at(';') and not self._at_stack_symbol(1):
            self.expect(';')
            return Seq(first, self.stm())
        return first

    def _at_stack_symbol(self, offset: int) -> bool:
        """栈文本中 ';' 之后可能是 del(...)/ret(...)/lvl(...)/bot"""
        tok = self.peek(offset)
        if tok.kind == 'ident' and tok.text == 'bot' and self.peek(offset + 1).kind == 'eof':
            return True
        return (tok.kind == 'ident' and tok.text in ('del', 'ret', 'lvl')
                and self.peek(offset + 1).text == '(')

    def simple(self) -> Stm:
        tok = self.tok
        if self.accept('skip'):
            return Skip()
        if self.accept('throw'):
            return Throw()
        if self.accept('{'):
            body = self.stm()
            self.expect('}')
            return body
        if self.accept('if'):
            cond = self.expr()
            self.expect('then')
            then = self.simple()
            self.expect('else')
            return If(cond, then, self.simple())
        if self.accept('while'):
            cond = self.expr()
            self.expect('do')
            return While(cond, self.simple())
        if self.accept('let'):
            name_tok = self.tok
            name = self.ident('变量名')
            self.check_binder(name, name_tok)
            self.expect(':')
            vtype = self.var_type()
            self.expect(':=')
            e = self.expr()
            self.expect('in')
            self.scope.append(name)
            try:
                body = self.simple()
            finally:
                self.scope.pop()
            return DeclVar(vtype, name, e, body)
        if self.accept('call'):
            target, method = self.callee()
            args = self.call_args()
            self.expect('$')
            return Call(target, method, args, self.expr())
        if self.accept('dcall'):
            target, method = self.callee()
            return DCall(target, method, self.call_args())
        if tok.kind == 'ident' and tok.text == 'this' and self.peek().text == '.':
            self.pos += 2
            name = self.ident('字段名')
            if name == 'balance':
                raise self.error("balance 只能读取，不能直接赋值", tok)
            self.expect(':=')
            return AssignField(name, self.expr())
        if tok.kind == 'ident' and self.peek().text == ':=':
            name = self.ident('变量名')
            if name in MAGIC_NAMES:
                raise self.error(f"不能给魔术变量 {name} 赋值", tok)
            self.expect(':=')
            return AssignVar(name, self.expr())
        raise self.error(f"期望语句，得到 {tok.text or '文件结尾'!r}")

    def callee(self) -> Tuple[Expr, str]:
        target = self.atom()
        while True:
            self.expect('.')
            name = self.ident('方法名')
            if self.at('('):
                return target, name
            target = Field(target, name)

    def call_args(self) -> Tuple[Expr, ...]:
        self.expect('(')
        if self.tok.kind == 'ident' and self.tok.text == 'args' and self.peek().text == ')':
            self.pos += 2
            return ARGS_ONLY
        args: List[Expr] = []
        if not self.at(')'):
            args.append(self.expr())
            while self.accept(','):
                args.append(self.expr())
        self.expect(')')
        return tuple(args)

    # --- 声明 -----------------------------------------------------------------

    def interface(self) -> InterfaceDecl:
        self.expect('interface')
        name_tok = self.tok
        name = self.ident('接口名')
        if name == ITOP:
            raise self.error("Itop 是内建接口，不能重新声明", name_tok)
        parent = self.ident('父接口名') if self.accept('extends') else ITOP
        self.expect('{')
        members: Dict[str, object] = {}
        while not self.at('}'):
            member_tok = self.tok
            member = self.ident('成员名')
            if member in members:
                raise self.error(f"接口 {name} 重复声明成员 {member}", member_tok)
            self.expect(':')
            members[member] = self.member_type()
            self.expect(';')
        self.expect('}')
        return InterfaceDecl(name, parent, members)

    def contract(self) -> Tuple[ContractDecl, Token]:
        start = self.expect('contract')
        address = self.ident('合约名')
        self.expect(':')
        interface = self.ident('接口名')
        self.expect('@')
        level = self.ident('安全级别')
        self.expect('{')
        fields: Dict[str, Value] = {}
        methods: Dict[str, MethodDecl] = {}
        while not self.at('}'):
            member_tok = self.tok
            if self.accept('field'):
                name = self.ident('字段名')
                if name in fields:
                    raise self.error(f"合约 {address} 重复声明字段 {name}", member_tok)
                self.expect(':=')
                fields[name] = self.value()
                self.expect(';')
            elif self.accept('func'):
                name = self.ident('方法名')
                if name in methods:
                    raise self.error(f"合约 {address} 重复声明方法 {name}", member_tok)
                methods[name] = self.method_rest(name)
            else:
                raise self.error(f"期望 field 或 func，得到 {self.tok.text!r}")
        self.expect('}')
        return _assemble_contract(address, interface, level, fields, methods, start), start

    def method_rest(self, name: str) -> MethodDecl:
        self.expect('(')
        params: List[str] = []
        if not self.at(')'):
            while True:
                tok = self.tok
                param = self.ident('参数名')
                self.check_binder(param, tok)
                if param in params:
                    raise self.error(f"方法 {name} 的参数 {param} 重复", tok)
                params.append(param)
                if not self.accept(','):
                    break
        self.expect(')')
        self.expect('{')
        self.scope = list(params)
        body = self.stm()
        self.scope = []
        self.expect('}')
        return MethodDecl(name, tuple(params), body)


def _assemble_contract(address: str, interface: str, level: str, fields: Dict[str, Value],
                       methods: Dict[str, MethodDecl], tok: Token) -> ContractDecl:
    if 'balance' not in fields:
        raise ParseError(f"合约 {address} 缺少必需的 balance 字段", tok.line, tok.column)
    balance = fields['balance']
    if isinstance(balance, bool) or not isinstance(balance, int):
        raise ParseError(f"合约 {address} 的 balance 必须是整数", tok.line, tok.column)
    send = methods.get('send')
    if send is None or send.params or send.body != Skip():
        raise ParseError(f"合约 {address} 必须声明 func send() {{ skip }}", tok.line, tok.column)
    fallback = methods.get('fallback')
    if fallback is None or fallback.params:
        raise ParseError(f"合约 {address} 必须声明无参数的 fallback", tok.line, tok.column)
    ordered_fields = (('balance', balance),) + tuple((k, v) for k, v in fields.items() if k != 'balance')
    ordered_methods = (send,) + tuple(m for k, m in methods.items() if k not in ('send', 'fallback'))
    return ContractDecl(address, interface, level, ordered_fields, ordered_methods, fallback.body)


# =============================================================================
# 6. 程序入口
# =============================================================================

def _parse_declarations(text: str, names: _Names, tokens: List[Token]):
    parser = _Parser(tokens, names)
    contracts: List[Tuple[ContractDecl, Token]] = []
    interfaces: List[InterfaceDecl] = []
    while parser.tok.kind != 'eof':
        if parser.at('contract'):
            contracts.append(parser.contract())
        elif parser.at('interface'):
            interfaces.append(parser.interface())
        else:
            raise parser.error(f"期望 contract 或 interface，得到 {parser.tok.text!r}")
    return contracts, interfaces


def parse_program(source: str, interface_source: str = '', lattice_source: str = '') -> Program:
    """
    解析合约、接口与安全格，并校验 Σ 一致性与 Γ 良构性

    Parameters
    ----------
    source : str
        .tsol 合约文本（也可以内联 interface 声明）
    interface_source : str
        .tsi 接口文本
    lattice_source : str
        .lat 格文本；为空时使用默认格 {L, H}

    Returns
    -------
    Program
    """
    lattice = parse_lattice(lattice_source)
    token_lists = [tokenize(source), tokenize(interface_source)]
    names = _Names(set(), set(), set())
    for tokens in token_lists:
        found = _prescan(tokens)
        names.addresses |= found.addresses
        names.methods |= found.methods
        names.interfaces |= found.interfaces

    contracts: List[Tuple[ContractDecl, Token]] = []
    interfaces: Dict[str, InterfaceDecl] = {}
    for text, tokens in zip((source, interface_source), token_lists):
        found_contracts, found_interfaces = _parse_declarations(text, names, tokens)
        contracts.extend(found_contracts)
        for decl in found_interfaces:
            if decl.name in interfaces:
                raise ProgramError(f"接口 {decl.name} 重复声明")
            interfaces[decl.name] = decl

    seen: Set[str] = set()
    addresses: Dict[str, ExprType] = {}
    for contract, tok in contracts:
        if contract.address in seen:
            raise ParseError(f"合约地址 {contract.address} 重复声明", tok.line, tok.column)
        seen.add(contract.address)
        if contract.interface != ITOP and contract.interface not in interfaces:
            raise ParseError(f"合约 {contract.address} 使用了未声明的接口 {contract.interface}",
                             tok.line, tok.column)
        lattice.check(contract.level)
        addresses[contract.address] = ExprType(base_from_name(contract.interface), contract.level)

    tenv = TypeEnv(lattice, interfaces, addresses)
    for report in (check_gamma_wellformed(tenv), check_sigma_consistency(tenv)):
        if not report:
            raise ProgramError(report.reason)

    program = Program(tuple(c for c, _ in contracts), tenv,
                      (source, interface_source, lattice_source), set(names.methods))
    logger.info("程序加载完成: %d 个合约, %d 个接口", len(program.contracts), len(interfaces))
    return program


def _parser_for(text: str, program: Optional[Program], bound: Iterable[str] = ()) -> _Parser:
    names = program.names() if program else _Names(set(), set(), set())
    parser = _Parser(tokenize(text), names)
    parser.scope = list(bound)
    return parser


def parse_stm_text(text: str, program: Optional[Program] = None, bound: Iterable[str] = ()) -> Stm:
    """在程序的名字表下解析一条语句；bound 为已在作用域中的变量"""
    parser = _parser_for(text, program, bound)
    s = parser.stm()
    parser.expect_eof()
    return s


def parse_expr_text(text: str, program: Optional[Program] = None, bound: Iterable[str] = ()) -> Expr:
    parser = _parser_for(text, program, bound)
    e = parser.expr()
    parser.expect_eof()
    return e


def parse_type_text(text: str):
    parser = _parser_for(text, None)
    t = parser.member_type() if text.strip().startswith('(') else parser.local_type()
    parser.expect_eof()
    return t


def parse_transaction(text: str, program: Program) -> List[Tuple[Addr, Call]]:
    """
    交易文件：每行 ``caller CALL callee.method(args)$amount``，# 开头为注释
    """
    entries: List[Tuple[Addr, Call]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 2)
        if len(parts) != 3 or parts[1].upper() != 'CALL':
            raise ParseError("交易行必须形如 caller CALL callee.method(args)$amount", lineno, 1)
        caller = parts[0]
        if caller not in program.addresses:
            raise ParseError(f"未知的调用者地址 {caller}", lineno, 1)
        stm = parse_stm_text('call ' + parts[2], program)
        if not isinstance(stm, Call):
            raise ParseError("交易必须是一次 call", lineno, 1)
        entries.append((Addr(caller), stm))
    return entries


# =============================================================================
# 7. 打印器
# =============================================================================

def pretty_expr(e: Expr) -> str:
    if isinstance(e, Lit):
        return format_value(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Field):
        return f"{pretty_expr(e.target)}.{e.name}"
    if isinstance(e, Op):
        if e.op == 'not':
            return f"(not {pretty_expr(e.args[0])})"
        return f"({pretty_expr(e.args[0])} {e.op} {pretty_expr(e.args[1])})"
    raise TypeError(f"未知表达式: {e!r}")


def _braced(s: Stm) -> str:
    return '{ ' + pretty_stm(s) + ' }' if isinstance(s, Seq) else pretty_stm(s)


def _pretty_args(args: Tuple[Expr, ...]) -> str:
    return ', '.join('args' if a == Var('args') else pretty_expr(a) for a in args)


def pretty_stm(s: Stm) -> str:
    if isinstance(s, Skip):
        return 'skip'
    if isinstance(s, Throw):
        return 'throw'
    if isinstance(s, DeclVar):
        return f"let {s.name} : {s.vtype} := {pretty_expr(s.expr)} in {_braced(s.body)}"
    if isinstance(s, AssignVar):
        return f"{s.name} := {pretty_expr(s.expr)}"
    if isinstance(s, AssignField):
        return f"this.{s.name} := {pretty_expr(s.expr)}"
    if isinstance(s, Seq):
        return f"{_braced(s.first)}; {pretty_stm(s.second)}"
    if isinstance(s, If):
        return f"if {pretty_expr(s.cond)} then {_braced(s.then)} else {_braced(s.orelse)}"
    if isinstance(s, While):
        return f"while {pretty_expr(s.cond)} do {_braced(s.body)}"
    if isinstance(s, Call):
        return (f"call {pretty_expr(s.target)}.{s.method}({_pretty_args(s.args)})"
                f"${pretty_expr(s.amount)}")
    if isinstance(s, DCall):
        return f"dcall {pretty_expr(s.target)}.{s.method}({_pretty_args(s.args)})"
    raise TypeError(f"未知语句: {s!r}")


def pretty_delta(delta: Delta) -> str:
    return str(delta)


def _pretty_symbol(sym: Symbol) -> str:
    if isinstance(sym, Del):
        return f"del({sym.name})"
    if isinstance(sym, Lvl):
        return f"lvl({sym.level})"
    if isinstance(sym, Ret):
        bindings = []
        for name, v in sym.vars.bindings:
            note = sym.vars.annotation(name)
            bindings.append(f"{name} : {note} = {format_value(v)}" if note else f"{name} = {format_value(v)}")
        text = ', '.join(bindings)
        if sym.delta is not None:
            text += ' | ' + pretty_delta(sym.delta)
        return f"ret({text})"
    return pretty_stm(sym)


def pretty_stack(q: Stack) -> str:
    """规范栈文本：sym (';' sym)* ';' 'bot'"""
    return '; '.join([_pretty_symbol(sym) for sym in q] + ['bot'])


def pretty_contract(c: ContractDecl) -> str:
    lines = [f"contract {c.address} : {c.interface}@{c.level} {{"]
    for name, v in c.fields:
        lines.append(f"  field {name} := {format_value(v)};")
    for m in c.methods:
        lines.append(f"  func {m.name}({', '.join(m.params)}) {{ {pretty_stm(m.body)} }}")
    lines.append(f"  func fallback() {{ {pretty_stm(c.fallback)} }}")
    lines.append("}")
    return '\n'.join(lines)


def pretty_interface(decl: InterfaceDecl) -> str:
    lines = [f"interface {decl.name} extends {decl.parent} {{"]
    for name, t in decl.members.items():
        lines.append(f"  {name} : {t};")
    lines.append("}")
    return '\n'.join(lines)


def pretty_program(program: Program) -> str:
    """合约与用户接口的规范文本，可被 parse_program 读回"""
    parts = [pretty_interface(d) for n, d in program.tenv.interfaces.items() if n != ITOP]
    parts += [pretty_contract(c) for c in program.contracts]
    return '\n\n'.join(parts) + '\n'


# =============================================================================
# 8. 栈文本解析
# =============================================================================

def parse_stack_text(text: str, program: Optional[Program] = None) -> Stack:
    """读回 pretty_stack 的输出"""
    parser = _parser_for(text, program)
    symbols: List[Symbol] = []
    while True:
        tok = parser.tok
        if tok.kind == 'ident' and tok.text == 'bot' and parser.peek().kind == 'eof':
            parser.pos += 1
            break
        if tok.kind == 'ident' and tok.text in ('del', 'ret', 'lvl') and parser.peek().text == '(':
            parser.pos += 2
            if tok.text == 'del':
                symbols.append(Del(parser.ident('变量名')))
            elif tok.text == 'lvl':
                symbols.append(Lvl(parser.ident('安全级别')))
            else:
                symbols.append(_parse_ret(parser))
            parser.expect(')')
        else:
            parser.scope = list(_bound_names(symbols))
            symbols.append(parser.simple())
        parser.expect(';')
    parser.expect_eof()
    return tuple(symbols)


def _bound_names(symbols: List[Symbol]) -> Set[str]:
    names: Set[str] = set()
    for sym in symbols:
        if isinstance(sym, Ret):
            names |= set(sym.vars.names())
    return names


def _parse_ret(parser: _Parser) -> Ret:
    values: Dict[str, Value] = {}
    notes: Dict[str, VarType] = {}
    while not parser.at('|') and not parser.at(')'):
        name = parser.tok.text
        parser.pos += 1
        if parser.accept(':'):
            notes[name] = parser.var_type()
        parser.expect('=')
        values[name] = parser.value()
        if not parser.accept(','):
            break
    delta = None
    if parser.accept('|'):
        entries = {}
        while not parser.at(')'):
            name = parser.tok.text
            parser.pos += 1
            parser.expect(':')
            entries[name] = parser.local_type()
            if not parser.accept(','):
                break
        delta = Delta.of(entries)
    return Ret(VarEnv.of(values, notes), delta)


def parse_delta_text(text: str) -> Delta:
    """``x : int@L, args : [int@L]`` → Delta"""
    parser = _parser_for(text, None)
    entries = {}
    while parser.tok.kind != 'eof':
        name = parser.tok.text
        parser.pos += 1
        parser.expect(':')
        entries[name] = parser.local_type()
        if not parser.accept(','):
            break
    parser.expect_eof()
    return Delta.of(entries)


# =============================================================================
# 9. 自由名
# =============================================================================

def free_vars(node: Union[Expr, Stm]) -> Set[str]:
    """自由变量名 FV，包含魔术变量；dcall 总是包含 id"""
    if isinstance(node, Lit):
        return set()
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Field):
        return free_vars(node.target)
    if isinstance(node, Op):
        return set().union(*(free_vars(a) for a in node.args))
    if isinstance(node, (Skip, Throw)):
        return set()
    if isinstance(node, DeclVar):
        return free_vars(node.expr) | (free_vars(node.body) - {node.name})
    if isinstance(node, AssignVar):
        return {node.name} | free_vars(node.expr)
    if isinstance(node, AssignField):
        return {'this'} | free_vars(node.expr)
    if isinstance(node, Seq):
        return free_vars(node.first) | free_vars(node.second)
    if isinstance(node, If):
        return free_vars(node.cond) | free_vars(node.then) | free_vars(node.orelse)
    if isinstance(node, While):
        return free_vars(node.cond) | free_vars(node.body)
    if isinstance(node, Call):
        names = free_vars(node.target) | free_vars(node.amount)
        for a in node.args:
            names |= free_vars(a)
        if node.method == ID_REF:
            names.add('id')
        return names
    if isinstance(node, DCall):
        names = free_vars(node.target) | {'id'}
        for a in node.args:
            names |= free_vars(a)
        return names
    raise TypeError(f"未知语法节点: {node!r}")


def _children(node) -> List:
    if isinstance(node, Field):
        return [node.target]
    if isinstance(node, Op):
        return list(node.args)
    if isinstance(node, DeclVar):
        return [node.expr, node.body]
    if isinstance(node, (AssignVar, AssignField)):
        return [node.expr]
    if isinstance(node, Seq):
        return [node.first, node.second]
    if isinstance(node, If):
        return [node.cond, node.then, node.orelse]
    if isinstance(node, While):
        return [node.cond, node.body]
    if isinstance(node, Call):
        return [node.target, *node.args, node.amount]
    if isinstance(node, DCall):
        return [node.target, *node.args]
    return []


def free_addrs(node: Union[Expr, Stm]) -> Set[Addr]:
    """语法上出现的地址字面量 FA"""
    if isinstance(node, Lit):
        return {node.value} if isinstance(node.value, Addr) else set()
    result: Set[Addr] = set()
    for child in _children(node):
        result |= free_addrs(child)
    return result


def literal_method_names(node: Union[Expr, Stm]) -> Set[str]:
    """出现在表达式中的方法名字面量"""
    if isinstance(node, Lit):
        return {node.value.name} if isinstance(node.value, MethodName) else set()
    result: Set[str] = set()
    for child in _children(node):
        result |= literal_method_names(child)
    return result


# =============================================================================
# 10. 规范 JSON（--dump-ast）
# =============================================================================

def _json_value(v: Value):
    if isinstance(v, bool) or isinstance(v, int):
        return v
    if isinstance(v, Addr):
        return {'addr': v.name}
    if isinstance(v, MethodName):
        return {'method': v.name}
    return [_json_value(x) for x in v]


def expr_to_json(e: Expr):
    if isinstance(e, Lit):
        return {'lit': _json_value(e.value)}
    if isinstance(e, Var):
        return {'var': e.name}
    if isinstance(e, Field):
        return {'field': e.name, 'of': expr_to_json(e.target)}
    return {'op': e.op, 'args': [expr_to_json(a) for a in e.args]}


def stm_to_json(s: Stm):
    kind = type(s).__name__
    if isinstance(s, (Skip, Throw)):
        return {'kind': kind}
    if isinstance(s, DeclVar):
        return {'kind': kind, 'type': str(s.vtype), 'name': s.name,
                'expr': expr_to_json(s.expr), 'body': stm_to_json(s.body)}
    if isinstance(s, (AssignVar, AssignField)):
        return {'kind': kind, 'name': s.name, 'expr': expr_to_json(s.expr)}
    if isinstance(s, Seq):
        return {'kind': kind, 'first': stm_to_json(s.first), 'second': stm_to_json(s.second)}
    if isinstance(s, If):
        return {'kind': kind, 'cond': expr_to_json(s.cond),
                'then': stm_to_json(s.then), 'else': stm_to_json(s.orelse)}
    if isinstance(s, While):
        return {'kind': kind, 'cond': expr_to_json(s.cond), 'body': stm_to_json(s.body)}
    result = {'kind': kind, 'target': expr_to_json(s.target), 'method': s.method,
              'args': [expr_to_json(a) for a in s.args]}
    if isinstance(s, Call):
        result['amount'] = expr_to_json(s.amount)
    return result


def program_to_json(program: Program) -> str:
    """稳定字段顺序的规范 JSON，用于 golden 测试"""
    lattice = program.lattice
    doc = {
        'lattice': {'levels': list(lattice.levels), 'order': [list(p) for p in lattice.covering_pairs()],
                    'top': lattice.top, 'bottom': lattice.bottom},
        'interfaces': [
            {'name': d.name, 'parent': d.parent, 'members': {k: str(t) for k, t in d.members.items()}}
            for n, d in sorted(program.tenv.interfaces.items())
        ],
        'contracts': [
            {'address': c.address, 'interface': c.interface, 'level': c.level,
             'fields': [[k, _json_value(v)] for k, v in c.fields],
             'methods': [{'name': m.name, 'params': list(m.params), 'body': stm_to_json(m.body)}
                         for m in c.methods],
             'fallback': stm_to_json(c.fallback)}
            for c in program.contracts
        ],
    }
    return json.dumps(doc, ensure_ascii=False, indent=2)
