"""
TinySol 运行时：环境、声明展开与非类型化小步语义

配置 ⟨Q, env_T, env_S, env_V⟩ 是不可变值；step_untyped 是纯函数，
返回新配置与调用标签（非调用步骤的标签为 None，即静默标签）。
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Tuple

from errors import ProgramError, StuckError
from lattice_types import Addr, Delta, MethodName, TypeEnv, Value, VarType, value_kind
from tinysol_syntax import (
    BOT, ID_REF, AssignField, AssignVar, Call, DCall, DeclVar, Del, Expr, Field, If, Lit, Lvl,
    Op, Program, Ret, Seq, Skip, Stack, Stm, Throw, Var, VarEnv, While, push, uses_args,
)

logger = logging.getLogger(__name__)


# =============================================================================
# 1. 环境
# =============================================================================

FieldEnv = Dict[str, Value]
State = Dict[Addr, FieldEnv]
MethodEnv = Dict[str, Tuple[Tuple[str, ...], Stm]]
MethodTable = Dict[Addr, MethodEnv]


@dataclass(frozen=True)
class Configuration:
    """⟨Q, env_T, env_S, env_V⟩"""
    stack: Stack
    table: MethodTable
    state: State
    vars: VarEnv

    @property
    def terminal(self) -> bool:
        return is_terminal(self.stack)


@dataclass(frozen=True)
class CallLabel:
    """调用标签 (X, Y, f, v̄, z)"""
    caller: Addr
    callee: Addr
    method: str
    args: Tuple[Value, ...]
    amount: int

    def __str__(self) -> str:
        args = ', '.join(str(a) for a in self.args)
        return f"({self.caller}, {self.callee}, {self.method}, [{args}], {self.amount})"

    def as_dict(self) -> Dict[str, object]:
        return {'caller': self.caller.name, 'callee': self.callee.name, 'method': self.method,
                'args': [str(a) for a in self.args], 'amount': self.amount}


Trace = List[CallLabel]


def is_terminal(stack: Stack) -> bool:
    """终止栈：⊥ 或栈顶为 throw"""
    return not stack or isinstance(stack[0], Throw)


def elaborate_declarations(program: Program) -> Tuple[MethodTable, State]:
    """
    展开合约声明为方法表与状态

    每个合约贡献字段映射（balance 在前）与方法映射（send、声明的方法、fallback）。
    """
    table: MethodTable = {}
    state: State = {}
    for contract in program.contracts:
        address = Addr(contract.address)
        if address in state:
            raise ProgramError(f"合约地址 {address} 重复声明")
        state[address] = dict(contract.fields)
        methods: MethodEnv = {m.name: (m.params, m.body) for m in contract.methods}
        methods['fallback'] = ((), contract.fallback)
        table[address] = methods
    return table, state


def initial_configuration(program: Program, stack: Stack = BOT,
                          vars: Optional[VarEnv] = None) -> Configuration:
    table, state = elaborate_declarations(program)
    return Configuration(stack, table, state, vars or VarEnv())


def total_balance(state: State) -> int:
    return sum(fields.get('balance', 0) for fields in state.values())


def set_field(state: State, address: Addr, name: str, value: Value) -> State:
    new_state = dict(state)
    fields = dict(state[address])
    fields[name] = value
    new_state[address] = fields
    return new_state


def transfer(state: State, sender: Addr, receiver: Addr, amount: int) -> State:
    """balance -= z / balance += z；余额可以为负"""
    state = set_field(state, sender, 'balance', state[sender]['balance'] - amount)
    return set_field(state, receiver, 'balance', state[receiver]['balance'] + amount)


# =============================================================================
# 2. 运算符与表达式
# =============================================================================

@dataclass(frozen=True)
class OpSpec:
    """运算符签名：arg_kinds 为 None 表示两个参数同种类即可（相等比较）"""
    arity: int
    arg_kinds: Optional[Tuple[str, ...]]
    result_kind: str
    fn: Callable


OPS: Dict[str, OpSpec] = {
    '+': OpSpec(2, ('int', 'int'), 'int', lambda a, b: a + b),
    '-': OpSpec(2, ('int', 'int'), 'int', lambda a, b: a - b),
    '*': OpSpec(2, ('int', 'int'), 'int', lambda a, b: a * b),
    '<': OpSpec(2, ('int', 'int'), 'bool', lambda a, b: a < b),
    '<=': OpSpec(2, ('int', 'int'), 'bool', lambda a, b: a <= b),
    '=': OpSpec(2, None, 'bool', lambda a, b: a == b),
    'and': OpSpec(2, ('bool', 'bool'), 'bool', lambda a, b: a and b),
    'or': OpSpec(2, ('bool', 'bool'), 'bool', lambda a, b: a or b),
    'not': OpSpec(1, ('bool',), 'bool', lambda a: not a),
}


def apply_op(name: str, values: Tuple[Value, ...]) -> Value:
    op_info = OPS.get(name)
    if op_info is None:
        raise StuckError(f"未知运算符 {name}")
    if len(values) != op_info.arity:
        raise StuckError(f"运算符 {name} 需要 {op_info.arity} 个参数，得到 {len(values)} 个")
    kinds = tuple(value_kind(v) for v in values)
    if op_info.arg_kinds is None:
        if kinds[0] != kinds[1] or 'args' in kinds:
            raise StuckError(f"运算符 {name} 的参数种类不一致: {kinds}")
    elif kinds != op_info.arg_kinds:
        raise StuckError(f"运算符 {name} 期望 {op_info.arg_kinds}，得到 {kinds}")
    return op_info.fn(*values)


def eval_expr(e: Expr, state: State, vars: VarEnv) -> Value:
    """大步求值 ⟨e, env_SV⟩ → v；无法求值时抛出 StuckError"""
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, Var):
        v = vars.get(e.name)
        if v is None:
            raise StuckError(f"未绑定的变量 {e.name}")
        return v
    if isinstance(e, Field):
        target = eval_expr(e.target, state, vars)
        if not isinstance(target, Addr) or target not in state:
            raise StuckError(f"访问字段 {e.name} 的对象不是已知地址: {target}")
        if e.name not in state[target]:
            raise StuckError(f"合约 {target} 没有字段 {e.name}")
        return state[target][e.name]
    if isinstance(e, Op):
        return apply_op(e.op, tuple(eval_expr(a, state, vars) for a in e.args))
    raise StuckError(f"未知表达式 {e!r}")


def eval_args(args: Tuple[Expr, ...], state: State, vars: VarEnv) -> Tuple[Value, ...]:
    """实参求值；f(args) 在调用时展开为已保存的参数序列"""
    if uses_args(args):
        stored = vars.get('args')
        if not isinstance(stored, tuple):
            raise StuckError("args 未绑定为参数序列")
        return stored
    return tuple(eval_expr(a, state, vars) for a in args)


def resolve_method(method: str, vars: VarEnv) -> str:
    """f = env_V(id) 若 m = id，否则 f = m"""
    if method != ID_REF:
        return method
    f = vars.get('id')
    if not isinstance(f, MethodName):
        raise StuckError(f"id 未绑定为方法名: {f}")
    return f.name


def _current_address(state: State, vars: VarEnv) -> Addr:
    this = vars.get('this')
    if not isinstance(this, Addr) or this not in state:
        raise StuckError(f"this 不是已知地址: {this}")
    return this


def _callee(e: Expr, table: MethodTable, state: State, vars: VarEnv) -> Addr:
    target = eval_expr(e, state, vars)
    if not isinstance(target, Addr) or target not in state or target not in table:
        raise StuckError(f"调用目标不是已知地址: {target}")
    return target


# =============================================================================
# 3. 小步语义
# =============================================================================

@dataclass(frozen=True)
class Dispatch:
    """一次调用的解析结果，非类型化与类型化语义共用"""
    kind: str                    # 'call' | 'fcall' | 'dcall'
    caller: Addr
    callee: Addr
    method: str
    args: Tuple[Value, ...]
    amount: int
    params: Tuple[str, ...]
    body: Stm


def dispatch_call(s: Call, c: Configuration) -> Dispatch:
    """规则 call/fcall 的前提：求值目标、金额与实参，查表并检查元数"""
    caller = _current_address(c.state, c.vars)
    callee = _callee(s.target, c.table, c.state, c.vars)
    amount = eval_expr(s.amount, c.state, c.vars)
    if isinstance(amount, bool) or not isinstance(amount, int):
        raise StuckError(f"转账金额不是整数: {amount}")
    args = eval_args(s.args, c.state, c.vars)
    f = resolve_method(s.method, c.vars)
    methods = c.table[callee]
    if f in methods:
        params, body = methods[f]
        if len(params) != len(args):
            raise StuckError(f"{callee}.{f} 需要 {len(params)} 个参数，得到 {len(args)} 个")
        return Dispatch('call', caller, callee, f, args, amount, params, body)
    return Dispatch('fcall', caller, callee, f, args, amount, (), methods['fallback'][1])


def dispatch_dcall(s: DCall, c: Configuration) -> Dispatch:
    """规则 dcall 的前提：委托调用不触发 fallback"""
    callee = _callee(s.target, c.table, c.state, c.vars)
    args = eval_args(s.args, c.state, c.vars)
    f = resolve_method(s.method, c.vars)
    if f not in c.table[callee]:
        raise StuckError(f"委托调用的方法 {callee}.{f} 不存在")
    params, body = c.table[callee][f]
    if len(params) != len(args):
        raise StuckError(f"{callee}.{f} 需要 {len(params)} 个参数，得到 {len(args)} 个")
    caller = _current_address(c.state, c.vars)
    return Dispatch('dcall', caller, callee, f, args, 0, params, body)


def callee_vars(d: Dispatch, vars: VarEnv) -> VarEnv:
    """被调方法的新变量环境"""
    if d.kind == 'dcall':
        values = {k: vars.get(k) for k in ('this', 'sender', 'value') if k in vars}
    else:
        values = {'this': d.callee, 'sender': d.caller, 'value': d.amount}
    if d.kind == 'fcall':
        values['id'] = MethodName(d.method)
        values['args'] = tuple(d.args)
    else:
        values.update(zip(d.params, d.args))
    return VarEnv.of(values)


def step_untyped(c: Configuration) -> Optional[Tuple[Configuration, Optional[CallLabel]]]:
    """
    单步执行；终止配置返回 None，卡住时抛出 StuckError

    Returns
    -------
    (新配置, 调用标签或 None)
    """
    if is_terminal(c.stack):
        return None
    head, rest = c.stack[0], c.stack[1:]

    if isinstance(head, Seq):
        return replace(c, stack=push(head, rest)), None
    if isinstance(head, Skip):
        return replace(c, stack=rest), None
    if isinstance(head, If):
        b = eval_expr(head.cond, c.state, c.vars)
        if not isinstance(b, bool):
            raise StuckError(f"if 条件不是布尔值: {b}")
        return replace(c, stack=push(head.then if b else head.orelse, rest)), None
    if isinstance(head, While):
        b = eval_expr(head.cond, c.state, c.vars)
        if not isinstance(b, bool):
            raise StuckError(f"while 条件不是布尔值: {b}")
        return replace(c, stack=push(head.body, (head,) + rest) if b else rest), None
    if isinstance(head, DeclVar):
        if head.name in c.vars:
            raise StuckError(f"变量 {head.name} 已声明")
        v = eval_expr(head.expr, c.state, c.vars)
        return replace(c, stack=push(head.body, (Del(head.name),) + rest),
                       vars=c.vars.bind(head.name, v, head.vtype)), None
    if isinstance(head, AssignVar):
        if head.name not in c.vars:
            raise StuckError(f"给未声明的变量 {head.name} 赋值")
        v = eval_expr(head.expr, c.state, c.vars)
        return replace(c, stack=rest, vars=c.vars.assign(head.name, v)), None
    if isinstance(head, AssignField):
        v = eval_expr(head.expr, c.state, c.vars)
        this = _current_address(c.state, c.vars)
        if head.name not in c.state[this]:
            raise StuckError(f"合约 {this} 没有字段 {head.name}")
        return replace(c, stack=rest, state=set_field(c.state, this, head.name, v)), None
    if isinstance(head, Del):
        if head.name not in c.vars:
            raise StuckError(f"删除未绑定的变量 {head.name}")
        return replace(c, stack=rest, vars=c.vars.remove(head.name)), None
    if isinstance(head, Ret):
        return replace(c, stack=rest, vars=head.vars), None
    if isinstance(head, Call):
        d = dispatch_call(head, c)
        label = CallLabel(d.caller, d.callee, d.method, d.args, d.amount)
        logger.debug("%s %s", d.kind, label)
        return replace(c, stack=push(d.body, (Ret(c.vars),) + rest),
                       state=transfer(c.state, d.caller, d.callee, d.amount),
                       vars=callee_vars(d, c.vars)), label
    if isinstance(head, DCall):
        d = dispatch_dcall(head, c)
        label = CallLabel(d.caller, d.callee, d.method, d.args, 0)
        logger.debug("dcall %s", label)
        return replace(c, stack=push(d.body, (Ret(c.vars),) + rest),
                       vars=callee_vars(d, c.vars)), label
    if isinstance(head, Lvl):
        raise StuckError("非类型化语义中出现安全级别符号")
    raise StuckError(f"未知栈符号 {head!r}")


@dataclass
class RunResult:
    """执行结果：status ∈ {terminated, threw, stuck, typed-stuck, budget-exhausted}"""
    config: Configuration
    trace: Trace
    status: str
    steps: int
    reason: str = ''

    @property
    def ok(self) -> bool:
        return self.status in ('terminated', 'threw')


def run_untyped(c: Configuration, max_steps: int = 5000) -> RunResult:
    """迭代 step_untyped，trace 为非静默标签的串联"""
    trace: Trace = []
    for steps in range(max_steps + 1):
        if is_terminal(c.stack):
            status = 'threw' if c.stack else 'terminated'
            return RunResult(c, trace, status, steps)
        if steps == max_steps:
            break
        try:
            c, label = step_untyped(c)
        except StuckError as e:
            logger.info("执行卡住 (第 %d 步): %s", steps, e)
            return RunResult(c, trace, 'stuck', steps, str(e))
        if label is not None:
            trace.append(label)
    return RunResult(c, trace, 'budget-exhausted', max_steps)


def project_trace(trace: Trace, address: Addr) -> Trace:
    """π ↾ X：只保留调用者为 X 的标签"""
    return [label for label in trace if label.caller == address]


# =============================================================================
# 4. 交易
# =============================================================================

def compile_transaction(entries: List[Tuple[Addr, Call]], tenv: Optional[TypeEnv] = None) -> Stack:
    """
    把交易条目编译为栈 {(this, X)}; call Y.f(ṽ)$z; ...; ⊥

    给出 tenv 时，返回符号同时携带 Δ = this : ⌈I^X, s⌉，供类型化语义使用。
    """
    stack: Stack = BOT
    for caller, call in reversed(entries):
        delta = None
        if tenv is not None:
            t = tenv.address_type(caller)
            delta = Delta.of({'this': VarType(t.base, t.level)})
        stack = (Ret(VarEnv.of({'this': caller}), delta), call) + stack
    return stack
