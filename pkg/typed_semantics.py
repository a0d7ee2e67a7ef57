"""
类型化操作语义

在固定安全级别 s 下执行栈：所有写入的容器级别 ⊒ s，分支、循环与调用只依赖
级别不高于被修改容器的信息。任何侧条件不满足时抛出 TypedStuckError，
记录规则名与违背的条件。
"""

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Set, Tuple

from config import SearchBudget
from errors import ConsistencyError, StructuralError, StuckError, TypedStuckError
from lattice_types import (
    ABSENT_METHOD, BOOL, IDF, INT, Addr, ArgsType, BaseType, Delta, LocalType, MethodName,
    ProcType, TypeEnv, Value, VarType,
)
from runtime import (
    OPS, CallLabel, Configuration, MethodTable, State, Trace, apply_op, callee_vars, dispatch_call,
    dispatch_dcall, is_terminal, set_field, transfer,
)
from static_checks import (
    TypeContext, check_consistency, check_stack_wellformed, fields_equal_at, least_type,
    typecheck_envs,
)
from tinysol_syntax import (
    AssignField, AssignVar, Call, DCall, DeclVar, Del, Expr, Field, If, Lit, Lvl, Op, Ret, Seq,
    Skip, Stack, Var, VarEnv, While, ID_REF, push, uses_args,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TypedConfiguration:
    """Σ;Γ;Δ ⊨_s ⟨Q, env_TSV⟩"""
    ctx: TypeContext
    level: str
    config: Configuration

    @property
    def stack(self) -> Stack:
        return self.config.stack

    @property
    def delta(self) -> Delta:
        return self.ctx.delta


# =============================================================================
# 1. 表达式
# =============================================================================

@dataclass
class ReadLog:
    """读取过的容器及其级别，用于检查表达式运行时安全性"""
    reads: List[Tuple[str, str]] = field(default_factory=list)

    def record(self, container: str, level: str) -> None:
        self.reads.append((container, level))


def _chain(ctx: TypeContext, rule: str, value: Value, container: LocalType,
           base: BaseType, level: str) -> None:
    """TypeOf(v) = (B1, s1)，B1 <: B2 <: B 且 s1 ⊑ s2 ⊑ s"""
    tenv, lat = ctx.tenv, ctx.lattice
    actual = tenv.type_of(value)
    if actual is None:
        raise TypedStuckError(rule, f"值 {value} 没有类型")
    if not (tenv.is_subtype(actual.base, container.base) and tenv.is_subtype(container.base, base)):
        raise TypedStuckError(rule, f"{actual.base} <: {container.base} <: {base} 不成立")
    if not (lat.leq(actual.level, container.level) and lat.leq(container.level, level)):
        raise TypedStuckError(rule, f"{actual.level} ⊑ {container.level} ⊑ {level} 不成立")


def _eval_typed(ctx: TypeContext, base: BaseType, level: str, e: Expr, state: State,
                vars: VarEnv, log: Optional[ReadLog]) -> Value:
    tenv, lat = ctx.tenv, ctx.lattice
    if isinstance(e, Lit):
        actual = tenv.type_of(e.value)
        if actual is None:
            raise TypedStuckError('r-val', f"值 {e.value} 没有类型")
        if not tenv.is_subtype(actual.base, base):
            raise TypedStuckError('r-val', f"{actual.base} <: {base} 不成立")
        if not lat.leq(actual.level, level):
            raise TypedStuckError('r-val', f"{actual.level} ⊑ {level} 不成立")
        return e.value
    if isinstance(e, Var):
        v = vars.get(e.name)
        if v is None:
            raise StuckError(f"未绑定的变量 {e.name}")
        t = ctx.delta.get(e.name)
        if not isinstance(t, VarType):
            raise TypedStuckError('r-var', f"Δ({e.name}) 不是容器类型")
        _chain(ctx, 'r-var', v, t, base, level)
        if log is not None:
            log.record(e.name, t.level)
        return v
    if isinstance(e, Field):
        static = least_type(ctx, e.target)
        if static is None or not static.base.is_interface:
            raise TypedStuckError('r-field', f"无法确定 {e.name} 所属对象的接口")
        target = _eval_typed(ctx, static.base, level, e.target, state, vars, log)
        if not isinstance(target, Addr) or target not in state or e.name not in state[target]:
            raise StuckError(f"无法读取字段 {target}.{e.name}")
        t = tenv.member(static.base.name, e.name)
        if not isinstance(t, VarType):
            raise TypedStuckError('r-field', f"Γ({static.base})({e.name}) 未定义")
        v = state[target][e.name]
        _chain(ctx, 'r-field', v, t, base, level)
        if log is not None:
            log.record(f"{target}.{e.name}", t.level)
        return v
    if isinstance(e, Op):
        op_info = OPS.get(e.op)
        if op_info is None:
            raise StuckError(f"未知运算符 {e.op}")
        result_base = {'int': INT, 'bool': BOOL}[op_info.result_kind]
        if not tenv.is_subtype(result_base, base):
            raise TypedStuckError('r-op', f"{result_base} <: {base} 不成立")
        if op_info.arg_kinds is None:
            # 相等比较：参数按各自的最小基类型求值
            kinds = []
            for a in e.args:
                static = least_type(ctx, a)
                if static is None:
                    raise TypedStuckError('r-op', f"无法确定 {e.op} 参数的类型")
                kinds.append(static.base)
        else:
            kinds = [{'int': INT, 'bool': BOOL}[k] for k in op_info.arg_kinds]
        values = tuple(_eval_typed(ctx, k, level, a, state, vars, log) for k, a in zip(kinds, e.args))
        return apply_op(e.op, values)
    raise StuckError(f"未知表达式 {e!r}")


def eval_expr_typed(ctx: TypeContext, want: Tuple[BaseType, str], e: Expr, state: State,
                    vars: VarEnv, log: Optional[ReadLog] = None) -> Optional[Value]:
    """
    Σ;Γ;Δ ⊨_{B_s} ⟨e, env_SV⟩ → v

    类型检查失败（typed-stuck）时返回 None；非类型化卡住仍抛出 StuckError。
    """
    base, level = want
    try:
        return _eval_typed(ctx, base, level, e, state, vars, log)
    except TypedStuckError as err:
        logger.debug("表达式类型化求值失败: %s", err)
        return None


def _eval_args_typed(ctx: TypeContext, args: Tuple[Expr, ...], params: Tuple[VarType, ...],
                     state: State, vars: VarEnv, rule: str) -> Tuple[Value, ...]:
    if uses_args(args):
        stored = vars.get('args')
        t = ctx.delta.get('args')
        if not isinstance(stored, tuple) or not isinstance(t, ArgsType):
            raise TypedStuckError(rule, "args 未按参数序列类型绑定")
        if not (len(stored) == len(t.items) == len(params)):
            raise TypedStuckError(rule, f"args 的长度与 {len(params)} 个形参不一致")
        for v, item, p in zip(stored, t.items, params):
            _chain(ctx, rule, v, item, p.base, p.level)
        return stored
    if len(args) != len(params):
        raise TypedStuckError(rule, f"需要 {len(params)} 个实参，得到 {len(args)} 个")
    return tuple(_eval_typed(ctx, p.base, p.level, a, state, vars, None) for a, p in zip(args, params))


def _least_args_type(ctx: TypeContext, args: Tuple[Expr, ...], rule: str) -> ArgsType:
    """fcall 中 args 的类型：逐个实参取最小类型"""
    if uses_args(args):
        t = ctx.delta.get('args')
        if not isinstance(t, ArgsType):
            raise TypedStuckError(rule, "args 未按参数序列类型绑定")
        return t
    items = []
    for a in args:
        least = least_type(ctx, a)
        if least is None:
            raise TypedStuckError(rule, "实参不可类型化")
        items.append(VarType(least.base, least.level))
    return ArgsType(tuple(items))


# =============================================================================
# 2. 栈
# =============================================================================

def _guard_level(ctx: TypeContext, cond: Expr, rule: str) -> str:
    least = least_type(ctx, cond)
    if least is None or least.base != BOOL:
        raise TypedStuckError(rule, "条件不是布尔表达式")
    return least.level


def _this(ctx: TypeContext, rule: str) -> VarType:
    t = ctx.delta.get('this')
    if not isinstance(t, VarType) or not t.base.is_interface:
        raise TypedStuckError(rule, "Δ(this) 不是接口类型")
    return t


def _require(ok: bool, rule: str, condition: str) -> None:
    if not ok:
        raise TypedStuckError(rule, condition)


def _typed_call(tc: TypedConfiguration, head: Call, rest: Stack,
                strict_transfer: bool) -> Tuple[TypedConfiguration, CallLabel]:
    ctx, c, s = tc.ctx, tc.config, tc.level
    tenv, lat = ctx.tenv, ctx.lattice
    d = dispatch_call(head, c)
    rule = 'r-call' if d.kind == 'call' else 'r-fcall'
    this = _this(ctx, rule)
    callee_type = tenv.address_type(d.callee)
    _require(callee_type is not None, rule, f"Γ({d.callee}) 未定义")
    iy, s2 = callee_type.base, callee_type.level
    sig = tenv.member(iy.name, d.method if d.kind == 'call' else 'fallback')
    _require(isinstance(sig, ProcType), rule, f"Γ({iy})({d.method}) 不是方法类型")
    sp = sig.level
    s1 = this.level
    s3 = tenv.member(this.base.name, 'balance').level
    s4 = tenv.member(iy.name, 'balance').level

    target = _eval_typed(ctx, iy, sp, head.target, c.state, c.vars, None)
    _require(target == d.callee, rule, "调用目标的类型化求值结果不一致")
    _eval_typed(ctx, INT, sp, head.amount, c.state, c.vars, None)
    if d.kind == 'call':
        _eval_args_typed(ctx, head.args, sig.params, c.state, c.vars, rule)
        args_type = None
    else:
        args_type = _least_args_type(ctx, head.args, rule)
        for v, item in zip(d.args, args_type.items):
            _chain(ctx, rule, v, item, item.base, item.level)

    _require(lat.leq(s1, sp), rule, f"s1 ⊑ s' 不成立: {s1} ⋢ {sp}")
    _require(lat.leq(s, sp), rule, f"s ⊑ s' 不成立: {s} ⋢ {sp}")
    if strict_transfer or d.amount != 0:
        _require(lat.leq_all(sp, (s3, s4)), rule, f"s' ⊑ s3, s4 不成立: {sp} ⋢ {s3}, {s4}")

    entries: Dict[str, LocalType] = {
        'this': VarType(iy, s2),
        'sender': VarType(this.base, s1),
        'value': VarType(INT, sp),
    }
    if d.kind == 'call':
        entries.update(zip(d.params, sig.params))
    else:
        entries['id'] = VarType(IDF, sp)
        entries['args'] = args_type
    new_config = Configuration(
        push(d.body, (Ret(c.vars, ctx.delta), Lvl(s)) + rest), c.table,
        transfer(c.state, d.caller, d.callee, d.amount), callee_vars(d, c.vars))
    label = CallLabel(d.caller, d.callee, d.method, d.args, d.amount)
    return TypedConfiguration(ctx.with_delta(Delta.of(entries)), sp, new_config), label


def _typed_dcall(tc: TypedConfiguration, head: DCall, rest: Stack) -> Tuple[TypedConfiguration, CallLabel]:
    ctx, c, s = tc.ctx, tc.config, tc.level
    tenv, lat = ctx.tenv, ctx.lattice
    rule = 'r-dcall'
    d = dispatch_dcall(head, c)
    this = _this(ctx, rule)
    callee_type = tenv.address_type(d.callee)
    _require(callee_type is not None, rule, f"Γ({d.callee}) 未定义")
    iy = callee_type.base
    sig = tenv.member(iy.name, d.method)
    _require(isinstance(sig, ProcType), rule, f"Γ({iy})({d.method}) 不是方法类型")
    sp = sig.level
    target = _eval_typed(ctx, iy, sp, head.target, c.state, c.vars, None)
    _require(target == d.callee, rule, "调用目标的类型化求值结果不一致")
    _eval_args_typed(ctx, head.args, sig.params, c.state, c.vars, rule)
    _require(tenv.is_subtype(this.base, iy), rule, f"Σ ⊢ {this.base} <: {iy} 不成立")
    for q, t in tenv.fields_of(iy.name).items():
        _require(tenv.member(this.base.name, q) == t, rule, f"字段 {q} 在 {iy} 与 {this.base} 中类型不同")
    _require(lat.leq(this.level, sp), rule, f"s1 ⊑ s' 不成立: {this.level} ⋢ {sp}")
    _require(lat.leq(s, sp), rule, f"s ⊑ s' 不成立: {s} ⋢ {sp}")

    entries: Dict[str, LocalType] = {k: ctx.delta.get(k) for k in ('this', 'sender', 'value') if k in ctx.delta}
    entries.update(zip(d.params, sig.params))
    new_config = Configuration(
        push(d.body, (Ret(c.vars, ctx.delta), Lvl(s)) + rest), c.table, c.state, callee_vars(d, c.vars))
    label = CallLabel(d.caller, d.callee, d.method, d.args, 0)
    return TypedConfiguration(ctx.with_delta(Delta.of(entries)), sp, new_config), label


def step_typed_labelled(tc: TypedConfiguration, strict_transfer: bool = False
                        ) -> Optional[Tuple[TypedConfiguration, Optional[CallLabel]]]:
    """
    单步类型化执行，同时返回调用标签

    strict_transfer 为 True 时去掉 r-call/r-fcall 中的 “z ≠ 0 ⇒” 前提（调用完整性变体）。
    终止配置返回 None；卡住时抛出 TypedStuckError 或 StuckError。
    """
    c = tc.config
    if is_terminal(c.stack):
        return None
    ctx, s = tc.ctx, tc.level
    lat = ctx.lattice
    head, rest = c.stack[0], c.stack[1:]

    def same(stack: Stack, **changes) -> TypedConfiguration:
        return TypedConfiguration(ctx, s, replace(c, stack=stack, **changes))

    if isinstance(head, Seq):
        return same(push(head, rest)), None
    if isinstance(head, Skip):
        return same(rest), None
    if isinstance(head, If):
        sp = lat.join(s, _guard_level(ctx, head.cond, 'r-if'))
        b = _eval_typed(ctx, BOOL, sp, head.cond, c.state, c.vars, None)
        stack = push(head.then if b else head.orelse, (Lvl(s),) + rest)
        return TypedConfiguration(ctx, sp, replace(c, stack=stack)), None
    if isinstance(head, While):
        guard = _guard_level(ctx, head.cond, 'r-while')
        sp = lat.join(s, guard)
        b = _eval_typed(ctx, BOOL, sp, head.cond, c.state, c.vars, None)
        if not b:
            return same(rest), None
        stack = push(head.body, (Lvl(s), head) + rest)
        return TypedConfiguration(ctx, sp, replace(c, stack=stack)), None
    if isinstance(head, DeclVar):
        _require(head.name not in c.vars and head.name not in ctx.delta, 'r-decv',
                 f"{head.name} ∉ dom(env_V), dom(Δ) 不成立")
        v = _eval_typed(ctx, head.vtype.base, head.vtype.level, head.expr, c.state, c.vars, None)
        new_ctx = ctx.with_delta(ctx.delta.bind(head.name, head.vtype))
        stack = push(head.body, (Del(head.name),) + rest)
        return TypedConfiguration(new_ctx, s, replace(c, stack=stack, vars=c.vars.bind(head.name, v))), None
    if isinstance(head, AssignVar):
        _require(head.name in c.vars, 'r-assv', f"{head.name} ∉ dom(env_V)")
        t = ctx.delta.get(head.name)
        _require(isinstance(t, VarType), 'r-assv', f"Δ({head.name}) 未定义")
        _require(lat.leq(s, t.level), 'r-assv', f"s ⊑ s' 不成立: {s} ⋢ {t.level}")
        v = _eval_typed(ctx, t.base, t.level, head.expr, c.state, c.vars, None)
        return same(rest, vars=c.vars.assign(head.name, v)), None
    if isinstance(head, AssignField):
        this_addr = c.vars.get('this')
        if not isinstance(this_addr, Addr) or this_addr not in c.state or head.name not in c.state[this_addr]:
            raise StuckError(f"无法写入字段 {this_addr}.{head.name}")
        this = _this(ctx, 'r-assf')
        t = ctx.tenv.member(this.base.name, head.name)
        _require(isinstance(t, VarType), 'r-assf', f"Γ({this.base})({head.name}) 未定义")
        _require(lat.leq(this.level, t.level), 'r-assf', f"s1 ⊑ s' 不成立: {this.level} ⋢ {t.level}")
        _require(lat.leq(s, t.level), 'r-assf', f"s ⊑ s' 不成立: {s} ⋢ {t.level}")
        v = _eval_typed(ctx, t.base, t.level, head.expr, c.state, c.vars, None)
        return same(rest, state=set_field(c.state, this_addr, head.name, v)), None
    if isinstance(head, Del):
        _require(head.name in ctx.delta, 'r-delv', f"{head.name} ∉ dom(Δ)")
        if head.name not in c.vars:
            raise StuckError(f"删除未绑定的变量 {head.name}")
        new_ctx = ctx.with_delta(ctx.delta.remove(head.name))
        return TypedConfiguration(new_ctx, s, replace(c, stack=rest, vars=c.vars.remove(head.name))), None
    if isinstance(head, Ret):
        _require(head.delta is not None, 'r-return', "返回符号缺少 Δ")
        new_ctx = ctx.with_delta(head.delta)
        vars = head.vars.plain()
        for name, v in vars.bindings:
            t = head.delta.get(name)
            _require(t is not None, 'r-return', f"Δ' ⊢ env_V' 不成立: {name} ∉ dom(Δ')")
            if isinstance(t, ArgsType):
                _require(isinstance(v, tuple) and len(v) == len(t.items), 'r-return', f"args 与 {t} 不匹配")
                for x, item in zip(v, t.items):
                    _chain(new_ctx, 'r-return', x, item, item.base, item.level)
            else:
                _chain(new_ctx, 'r-return', v, t, t.base, t.level)
        return TypedConfiguration(new_ctx, s, replace(c, stack=rest, vars=vars)), None
    if isinstance(head, Lvl):
        _require(lat.leq(head.level, s), 'r-restore', f"s' ⊒ s 不成立: {s} ⋣ {head.level}")
        return TypedConfiguration(ctx, head.level, replace(c, stack=rest)), None
    if isinstance(head, Call):
        return _typed_call(tc, head, rest, strict_transfer)
    if isinstance(head, DCall):
        return _typed_dcall(tc, head, rest)
    raise StuckError(f"未知栈符号 {head!r}")


def step_typed(tc: TypedConfiguration) -> Optional[TypedConfiguration]:
    """单步类型化执行；终止返回 None，卡住抛出 TypedStuckError / StuckError"""
    result = step_typed_labelled(tc)
    return None if result is None else result[0]


# =============================================================================
# 3. 运行器
# =============================================================================

@dataclass
class TypedRunResult:
    """status ∈ {terminated, threw, typed-stuck, stuck, budget-exhausted, preservation-violated}"""
    final: TypedConfiguration
    trace: Trace
    status: str
    steps: int
    reason: str = ''

    @property
    def ok(self) -> bool:
        return self.status in ('terminated', 'threw')


def preservation_problems(before: TypedConfiguration, after: TypedConfiguration) -> List[str]:
    """单步之后的良类型、一致性、良构性，以及低于执行级别的字段不变"""
    problems: List[str] = []
    c = after.config
    tenv = after.ctx.tenv
    for report in (typecheck_envs(after.ctx, {}, c.state, c.vars),
                   check_consistency(tenv, c.table, c.state, c.vars),
                   check_stack_wellformed(after.ctx, c.state, c.vars, after.level, c.stack)):
        problems.extend(report.problems)
    lat = tenv.lattice
    for observer in lat.levels:
        if lat.leq(before.level, observer):
            continue
        for address, fields in before.config.state.items():
            t = tenv.address_type(address)
            if t and not fields_equal_at(tenv, t.base.name, fields, c.state[address], observer):
                problems.append(f"级别 {observer} 可观察的字段 {address} 在 {before.level} 级执行中被修改")
    return problems


def run_typed(tc: TypedConfiguration, max_steps: int = 5000, assert_preservation: bool = False,
              strict_transfer: bool = False) -> TypedRunResult:
    """迭代类型化单步"""
    trace: Trace = []
    for steps in range(max_steps + 1):
        if is_terminal(tc.stack):
            return TypedRunResult(tc, trace, 'threw' if tc.stack else 'terminated', steps)
        if steps == max_steps:
            break
        try:
            nxt, label = step_typed_labelled(tc, strict_transfer)
        except TypedStuckError as err:
            logger.info("类型化执行卡住 (第 %d 步) %s", steps, err)
            return TypedRunResult(tc, trace, 'typed-stuck', steps, str(err))
        except StuckError as err:
            return TypedRunResult(tc, trace, 'stuck', steps, str(err))
        if assert_preservation:
            problems = preservation_problems(tc, nxt)
            if problems:
                return TypedRunResult(nxt, trace, 'preservation-violated', steps + 1, '; '.join(problems))
        if label is not None:
            trace.append(label)
        tc = nxt
    return TypedRunResult(tc, trace, 'budget-exhausted', max_steps)


# =============================================================================
# 4. 规范状态构造
# =============================================================================

def canonical_value(tenv: TypeEnv, t: LocalType) -> Value:
    """int → 0，bool → false，idf → __m0，I_s → 最小的可容许地址"""
    if isinstance(t, ArgsType):
        return tuple(canonical_value(tenv, item) for item in t.items)
    if t.base == INT:
        return 0
    if t.base == BOOL:
        return False
    if t.base == IDF:
        return MethodName(ABSENT_METHOD)
    candidates = tenv.admissible_addresses(t.base, t.level)
    if not candidates:
        raise ConsistencyError(f"类型 {t} 没有可容许的地址")
    return candidates[0]


def canonical_vars(tenv: TypeEnv, delta: Delta) -> VarEnv:
    return VarEnv.of({x: canonical_value(tenv, t) for x, t in delta.items()})


def build_canonical_state(ctx: TypeContext) -> Tuple[State, VarEnv]:
    """
    按 Γ 与 Δ 构造一个良类型且一致的状态

    Raises
    ------
    ConsistencyError
        某个接口类型没有可容许的地址
    """
    tenv = ctx.tenv
    state: State = {}
    for name in sorted(tenv.addresses):
        t = tenv.addresses[name]
        state[Addr(name)] = {p: canonical_value(tenv, ft) for p, ft in tenv.fields_of(t.base.name).items()}
    return state, canonical_vars(tenv, ctx.delta)


def candidate_values(tenv: TypeEnv, t: LocalType, literals: Iterable[int] = ()) -> List[Value]:
    """容器类型的代表性取值"""
    if isinstance(t, ArgsType):
        return [canonical_value(tenv, t)]
    if t.base == BOOL:
        return [False, True]
    if t.base == INT:
        values = {0, 1}
        for c in literals:
            values.update((c - 1, c, c + 1))
        return sorted(values)
    if t.base == IDF:
        return [MethodName(ABSENT_METHOD)] + [MethodName(m) for m in tenv.method_names()]
    return list(tenv.admissible_addresses(t.base, t.level))


def _int_literals(e: Expr) -> Set[int]:
    if isinstance(e, Lit):
        v = e.value
        return {v} if isinstance(v, int) and not isinstance(v, bool) else set()
    if isinstance(e, Field):
        return _int_literals(e.target)
    if isinstance(e, Op):
        return set().union(*(_int_literals(a) for a in e.args))
    return set()


def _containers(e: Expr, var_names: Set[str], field_names: Set[str]) -> None:
    if isinstance(e, Var):
        var_names.add(e.name)
    elif isinstance(e, Field):
        field_names.add(e.name)
        _containers(e.target, var_names, field_names)
    elif isinstance(e, Op):
        for a in e.args:
            _containers(a, var_names, field_names)


def decision_exprs(head) -> List[Expr]:
    """决定后继形状的表达式：条件、调用目标、金额，以及 id 分派"""
    if isinstance(head, (If, While)):
        return [head.cond]
    if isinstance(head, Call):
        exprs = [head.target, head.amount]
        return exprs + ([Var('id')] if head.method == ID_REF else [])
    if isinstance(head, DCall):
        return [head.target] + ([Var('id')] if head.method == ID_REF else [])
    return []


def enumerate_branch_states(ctx: TypeContext, guards: Iterable[Expr],
                            budget: Optional[SearchBudget] = None) -> List[Tuple[State, VarEnv]]:
    """
    规范状态加上改变条件/分派容器取值得到的状态

    组合数超过 budget.max_realizations 时退化为逐个容器变化。
    """
    budget = budget or SearchBudget()
    tenv = ctx.tenv
    state, vars = build_canonical_state(ctx)
    var_names: Set[str] = set()
    field_names: Set[str] = set()
    literals: Set[int] = set()
    for g in guards:
        _containers(g, var_names, field_names)
        literals |= _int_literals(g)

    slots: List[Tuple[Tuple, List[Value]]] = []
    for x in sorted(var_names):
        t = ctx.delta.get(x)
        if t is not None:
            slots.append((('var', x), candidate_values(tenv, t, literals)))
    for address in sorted(state):
        iname = tenv.address_type(address).base.name
        for p in sorted(field_names):
            ft = tenv.member(iname, p)
            if isinstance(ft, VarType) and p in state[address]:
                slots.append((('field', address, p), candidate_values(tenv, ft, literals)))

    def realize(assignment) -> Tuple[State, VarEnv]:
        new_state = {a: dict(f) for a, f in state.items()}
        new_vars = vars
        for (slot, _), v in zip(slots, assignment):
            if slot[0] == 'var':
                new_vars = new_vars.assign(slot[1], v)
            else:
                new_state[slot[1]][slot[2]] = v
        return new_state, new_vars

    total = 1
    for _, values in slots:
        total *= max(len(values), 1)
    if total <= budget.max_realizations:
        combos = itertools.product(*(values for _, values in slots))
    else:
        logger.warning("状态组合数 %d 超过预算，改为逐个容器变化", total)
        base = [_canonical_choice(state, vars, slot) for slot, _ in slots]
        combos = [tuple(base)]
        for i, (_, values) in enumerate(slots):
            for v in values:
                combos.append(tuple(base[:i]) + (v,) + tuple(base[i + 1:]))

    results: List[Tuple[State, VarEnv]] = [(state, vars)]
    seen = {_freeze(state, vars)}
    for assignment in combos:
        realized = realize(assignment)
        key = _freeze(*realized)
        if key not in seen:
            seen.add(key)
            results.append(realized)
    return results


def _canonical_choice(state: State, vars: VarEnv, slot: Tuple) -> Value:
    if slot[0] == 'var':
        return vars.get(slot[1])
    return state[slot[1]][slot[2]]


def _freeze(state: State, vars: VarEnv):
    return (tuple(sorted((a, tuple(sorted(f.items()))) for a, f in state.items())), vars)


# =============================================================================
# 5. finish / 去级别 / 卡住见证
# =============================================================================

def finish_types(q: Stack, delta: Delta, level: str) -> Tuple[Delta, str]:
    """栈执行到 ⊥ 时的 (Δ, s)"""
    for sym in q:
        if isinstance(sym, Del):
            if sym.name not in delta:
                raise StructuralError(f"del({sym.name}) 处 Δ 中没有 {sym.name}")
            delta = delta.remove(sym.name)
        elif isinstance(sym, Ret):
            if sym.delta is None:
                raise StructuralError("返回符号缺少 Δ")
            delta = sym.delta
        elif isinstance(sym, Lvl):
            level = sym.level
    return delta, level


def merge_vars(vars: VarEnv, delta: Delta) -> VarEnv:
    """把 Δ 的类型并入 env_V，两者的域必须一致"""
    if set(vars.names()) != set(delta.names()):
        raise StructuralError(f"merge: env_V 与 Δ 的域不一致 ({vars.names()} vs {delta.names()})")
    notes = {x: t for x, t in delta.items() if isinstance(t, VarType)}
    return VarEnv(vars.bindings, tuple(sorted(notes.items())))


def strip_levels(q: Stack) -> Stack:
    """去掉级别符号，并把 (env_V, Δ) 合并为带类型的 env_V"""
    result = []
    for sym in q:
        if isinstance(sym, Lvl):
            continue
        if isinstance(sym, Ret) and sym.delta is not None:
            result.append(Ret(merge_vars(sym.vars, sym.delta)))
        else:
            result.append(sym)
    return tuple(result)


def find_stuck_witness(ctx: TypeContext, table: MethodTable, q: Stack, level: str,
                       budget: Optional[SearchBudget] = None) -> Optional[List[str]]:
    """
    有界搜索一条通往卡住三元组的提升转换路径

    返回人类可读的路径，最后一项为卡住原因；没有卡住或预算耗尽时返回 None。
    """
    from semantic_typing import SemanticWorld, Triplet, build_interpretation

    result = build_interpretation(SemanticWorld(ctx.tenv, table), Triplet(q, ctx.delta, level), budget)
    if result.status == 'unknown':
        logger.warning("卡住见证搜索预算耗尽: %s", result.reason)
    return result.witness if result.status == 'untypable' else None
