"""
静态检查：语法类型系统、环境良类型、一致性、栈良构性与 s-等价

判定函数统一返回 Report（ok + 失败的规则实例），不抛异常。
内部辅助函数返回 None 表示成功，返回字符串表示失败原因，格式为 "规则名: 说明"。
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from lattice_types import (
    BOOL, IDF, INT, ITOP, Addr, ArgsType, BaseType, Delta, ExprType, LocalType, ProcType,
    Report, TypeEnv, Value, VarType, check_gamma_wellformed, check_sigma_consistency, iface,
)
from runtime import OPS, MethodTable, State, elaborate_declarations
from tinysol_syntax import (
    ID_REF, AssignField, AssignVar, Call, DCall, DeclVar, Del, Expr, Field, If, Lit, Lvl, Op,
    Program, Ret, Seq, Skip, Stack, Stm, Throw, Var, VarEnv, While, free_addrs, free_vars,
    pretty_expr, uses_args,
)

logger = logging.getLogger(__name__)

UNTYPABLE_CALL = "无法语法类型化：fallback/id 调用需要语义证书"


# =============================================================================
# 1. 类型上下文
# =============================================================================

@dataclass(frozen=True)
class TypeContext:
    """(Σ, Γ, Δ)"""
    tenv: TypeEnv
    delta: Delta = field(default_factory=Delta)

    @property
    def lattice(self):
        return self.tenv.lattice

    def with_delta(self, delta: Delta) -> 'TypeContext':
        return TypeContext(self.tenv, delta)


def _kind_base(kind: str) -> BaseType:
    return {'int': INT, 'bool': BOOL}[kind]


def least_type(ctx: TypeContext, e: Expr) -> Optional[ExprType]:
    """
    最小可导出类型：基类型取最小接口，级别取读取的所有容器级别的上确界

    不可类型化时返回 None。
    """
    tenv, lat = ctx.tenv, ctx.lattice
    if isinstance(e, Lit):
        return tenv.type_of(e.value)
    if isinstance(e, Var):
        t = ctx.delta.get(e.name)
        return ExprType(t.base, t.level) if isinstance(t, VarType) else None
    if isinstance(e, Field):
        target = least_type(ctx, e.target)
        if target is None or not target.base.is_interface:
            return None
        member = tenv.member(target.base.name, e.name)
        if not isinstance(member, VarType):
            return None
        return ExprType(member.base, lat.join(target.level, member.level))
    if isinstance(e, Op):
        op_info = OPS.get(e.op)
        if op_info is None or len(e.args) != op_info.arity:
            return None
        args = [least_type(ctx, a) for a in e.args]
        if any(a is None for a in args):
            return None
        if op_info.arg_kinds is None:
            b1, b2 = args[0].base, args[1].base
            same = b1 == b2 or (b1.is_interface and b2.is_interface)
            if not same or b1 not in (INT, BOOL, IDF) and not b1.is_interface:
                return None
        elif any(a.base != _kind_base(k) for a, k in zip(args, op_info.arg_kinds)):
            return None
        return ExprType(_kind_base(op_info.result_kind), lat.join_all(a.level for a in args))
    return None


def expr_has_type(ctx: TypeContext, e: Expr, base: BaseType, level: str) -> bool:
    """Σ;Γ;Δ ⊢ e : B_s"""
    least = least_type(ctx, e)
    return (least is not None and ctx.tenv.is_subtype(least.base, base)
            and ctx.lattice.leq(least.level, level))


@dataclass
class ExprJudgement:
    ok: bool
    least: Optional[ExprType]
    reason: str = ''


def typecheck_expr(ctx: TypeContext, e: Expr, want: ExprType) -> ExprJudgement:
    """判定 Σ;Γ;Δ ⊢ e : want，同时返回最小类型"""
    least = least_type(ctx, e)
    if least is None:
        return ExprJudgement(False, None, f"表达式 {pretty_expr(e)} 不可类型化")
    if not ctx.tenv.is_subtype(least.base, want.base):
        return ExprJudgement(False, least, f"{pretty_expr(e)} : {least}，基类型不是 {want.base} 的子类型")
    if not ctx.lattice.leq(least.level, want.level):
        return ExprJudgement(False, least, f"{pretty_expr(e)} : {least}，级别 {least.level} ⋢ {want.level}")
    return ExprJudgement(True, least)


def value_has_type(tenv: TypeEnv, v: Value, t: LocalType) -> bool:
    """Σ;Γ;∅ ⊢ v : B_s；args 元组逐项检查"""
    if isinstance(t, ArgsType):
        return (isinstance(v, tuple) and len(v) == len(t.items)
                and all(value_has_type(tenv, x, item) for x, item in zip(v, t.items)))
    actual = tenv.type_of(v)
    return (actual is not None and tenv.is_subtype(actual.base, t.base)
            and tenv.lattice.leq(actual.level, t.level))


# =============================================================================
# 2. 语句
# =============================================================================

def _args_fail(ctx: TypeContext, args: Tuple[Expr, ...], params: Tuple[VarType, ...], rule: str) -> Optional[str]:
    if uses_args(args):
        return f"{rule}: {UNTYPABLE_CALL}"
    if len(args) != len(params):
        return f"{rule}: 需要 {len(params)} 个实参，得到 {len(args)} 个"
    for a, p in zip(args, params):
        if not expr_has_type(ctx, a, p.base, p.level):
            return f"{rule}: 实参 {pretty_expr(a)} 不具有类型 {p}"
    return None


def _this_type(ctx: TypeContext, rule: str) -> Tuple[Optional[VarType], Optional[str]]:
    this = ctx.delta.get('this')
    if not isinstance(this, VarType) or not this.base.is_interface:
        return None, f"{rule}: Δ(this) 不是接口类型"
    return this, None


def call_problem(ctx: TypeContext, s: Call, level: str) -> Optional[str]:
    if s.method == ID_REF:
        return f"t-call: {UNTYPABLE_CALL}"
    this, problem = _this_type(ctx, 't-call')
    if problem:
        return problem
    target = least_type(ctx, s.target)
    if target is None or not target.base.is_interface:
        return f"t-call: 调用目标 {pretty_expr(s.target)} 不是接口类型"
    tenv, lat = ctx.tenv, ctx.lattice
    s1, s3 = this.level, tenv.member(this.base.name, 'balance').level
    reasons: List[str] = []
    for name in tenv.ancestors(target.base.name):
        sig = tenv.member(name, s.method)
        if not isinstance(sig, ProcType):
            continue
        sp = sig.level
        s4 = tenv.member(name, 'balance').level
        checks = [
            (lat.leq(target.level, sp), f"目标级别 {target.level} ⋢ {sp}"),
            (lat.leq(s1, sp), f"s1 = {s1} ⋢ s' = {sp}"),
            (lat.leq(sp, s3) and lat.leq(sp, s4), f"s' = {sp} ⋢ 余额级别 {s3}, {s4}"),
            (lat.leq(level, sp), f"s = {level} ⋢ s' = {sp}"),
            (expr_has_type(ctx, s.amount, INT, sp), f"金额 {pretty_expr(s.amount)} 不具有 int@{sp}"),
        ]
        failed = [msg for ok, msg in checks if not ok]
        args_problem = _args_fail(ctx, s.args, sig.params, 't-call')
        if args_problem:
            failed.append(args_problem)
        if not failed:
            return None
        reasons.append(f"{name}: " + '; '.join(failed))
    if not reasons:
        return f"t-call: {target.base} 的祖先均未声明方法 {s.method}，{UNTYPABLE_CALL}"
    return "t-call: " + ' | '.join(reasons)


def dcall_problem(ctx: TypeContext, s: DCall, level: str) -> Optional[str]:
    if s.method == ID_REF:
        return f"t-dcall: {UNTYPABLE_CALL}"
    this, problem = _this_type(ctx, 't-dcall')
    if problem:
        return problem
    target = least_type(ctx, s.target)
    if target is None or not target.base.is_interface:
        return f"t-dcall: 调用目标 {pretty_expr(s.target)} 不是接口类型"
    tenv, lat = ctx.tenv, ctx.lattice
    reasons: List[str] = []
    for name in tenv.ancestors(target.base.name):
        sig = tenv.member(name, s.method)
        if not isinstance(sig, ProcType):
            continue
        sp = sig.level
        failed = []
        if not tenv.is_subtype(this.base, iface(name)):
            failed.append(f"Σ ⊢ {this.base} <: {name} 不成立")
        for q, t in tenv.fields_of(name).items():
            if tenv.member(this.base.name, q) != t:
                failed.append(f"字段 {q} 的类型不一致")
        if not lat.leq(target.level, sp):
            failed.append(f"目标级别 {target.level} ⋢ {sp}")
        if not lat.leq(this.level, sp):
            failed.append(f"s1 = {this.level} ⋢ s' = {sp}")
        if not lat.leq(level, sp):
            failed.append(f"s = {level} ⋢ s' = {sp}")
        args_problem = _args_fail(ctx, s.args, sig.params, 't-dcall')
        if args_problem:
            failed.append(args_problem)
        if not failed:
            return None
        reasons.append(f"{name}: " + '; '.join(failed))
    if not reasons:
        return f"t-dcall: {target.base} 的祖先均未声明方法 {s.method}"
    return "t-dcall: " + ' | '.join(reasons)


def _stm_fail(ctx: TypeContext, s: Stm, level: str) -> Optional[str]:
    lat, tenv = ctx.lattice, ctx.tenv
    if isinstance(s, (Skip, Throw)):
        return None
    if isinstance(s, Seq):
        return _stm_fail(ctx, s.first, level) or _stm_fail(ctx, s.second, level)
    if isinstance(s, (If, While)):
        rule = 't-if' if isinstance(s, If) else 't-while'
        guard = least_type(ctx, s.cond)
        if guard is None or guard.base != BOOL:
            return f"{rule}: 条件 {pretty_expr(s.cond)} 不是布尔表达式"
        raised = lat.join(level, guard.level)
        branches = (s.then, s.orelse) if isinstance(s, If) else (s.body,)
        for branch in branches:
            problem = _stm_fail(ctx, branch, raised)
            if problem:
                return problem
        return None
    if isinstance(s, DeclVar):
        if not expr_has_type(ctx, s.expr, s.vtype.base, s.vtype.level):
            return f"t-decv: {pretty_expr(s.expr)} 不具有类型 {s.vtype}"
        return _stm_fail(ctx.with_delta(ctx.delta.bind(s.name, s.vtype)), s.body, level)
    if isinstance(s, AssignVar):
        t = ctx.delta.get(s.name)
        if not isinstance(t, VarType):
            return f"t-assv: 变量 {s.name} 不在 Δ 中"
        if not lat.leq(level, t.level):
            return f"t-assv: s = {level} ⋢ {t.level}（变量 {s.name}）"
        if not expr_has_type(ctx, s.expr, t.base, t.level):
            return f"t-assv: {pretty_expr(s.expr)} 不具有类型 {t}"
        return None
    if isinstance(s, AssignField):
        this, problem = _this_type(ctx, 't-assf')
        if problem:
            return problem
        t = tenv.member(this.base.name, s.name)
        if not isinstance(t, VarType):
            return f"t-assf: 接口 {this.base} 没有字段 {s.name}"
        if not lat.leq(this.level, t.level):
            return f"t-assf: s1 = {this.level} ⋢ {t.level}（字段 {s.name}）"
        if not lat.leq(level, t.level):
            return f"t-assf: s = {level} ⋢ {t.level}（字段 {s.name}）"
        if not expr_has_type(ctx, s.expr, t.base, t.level):
            return f"t-assf: {pretty_expr(s.expr)} 不具有类型 {t}"
        return None
    if isinstance(s, Call):
        return call_problem(ctx, s, level)
    if isinstance(s, DCall):
        return dcall_problem(ctx, s, level)
    return f"未知语句 {s!r}"


def typecheck_stm(ctx: TypeContext, s: Stm, level: str) -> Report:
    """Σ;Γ;Δ ⊢ S : cmd_s"""
    ctx.lattice.check(level)
    problem = _stm_fail(ctx, s, level)
    if problem:
        logger.debug("语句类型检查失败: %s", problem)
    return Report.of([problem] if problem else [])


# =============================================================================
# 3. 环境与栈
# =============================================================================

def _vars_fail(ctx: TypeContext, vars: VarEnv, strict: bool) -> Optional[str]:
    """
    t-envv：strict 时每个绑定都必须在 Δ 中（t-envv_u）；
    否则只检查带注解的绑定，且注解须与 Δ 一致（t-envv_t）
    """
    for name, v in vars.bindings:
        note = vars.annotation(name)
        t = ctx.delta.get(name)
        if not strict and note is None:
            continue
        if t is None:
            return f"t-envv: 变量 {name} 不在 Δ 中"
        if note is not None and note != t:
            return f"t-envv: 变量 {name} 的注解 {note} 与 Δ 中的 {t} 不一致"
        if not value_has_type(ctx.tenv, v, t):
            return f"t-envv: 变量 {name} 的值 {v} 不具有类型 {t}"
    return None


def typecheck_vars(ctx: TypeContext, vars: VarEnv, strict: bool = True) -> Report:
    problem = _vars_fail(ctx, vars, strict)
    return Report.of([problem] if problem else [])


def method_delta(tenv: TypeEnv, address: Addr, params: Tuple[str, ...], sig: ProcType) -> Delta:
    """t-env-m 构造的 Δ"""
    t = tenv.address_type(address)
    balance = tenv.member(t.base.name, 'balance')
    entries: Dict[str, LocalType] = {
        'this': VarType(t.base, t.level),
        'value': VarType(INT, balance.level),
        'sender': VarType(iface(ITOP), tenv.lattice.top),
    }
    entries.update(zip(params, sig.params))
    return Delta.of(entries)


def typecheck_method(tenv: TypeEnv, address: Addr, name: str, params: Tuple[str, ...], body: Stm) -> Report:
    """t-env-m：方法体在签名的命令级别下类型正确，且 s ⊑ s1"""
    t = tenv.address_type(address)
    if t is None:
        return Report.of([f"t-env-m: 地址 {address} 不在 Γ 中"])
    sig = tenv.member(t.base.name, name)
    if not isinstance(sig, ProcType):
        return Report.of([f"t-env-m: 接口 {t.base} 未声明方法 {name}"])
    if len(sig.params) != len(params):
        return Report.of([f"t-env-m: {address}.{name} 的参数个数与签名不一致"])
    if not tenv.lattice.leq(sig.level, t.level):
        return Report.of([f"t-env-m: {address}.{name} 的命令级别 {sig.level} ⋢ {t.level}"])
    ctx = TypeContext(tenv, method_delta(tenv, address, params, sig))
    problem = _stm_fail(ctx, body, sig.level)
    if problem:
        return Report.of([f"{address}.{name}: {problem}"])
    return Report.of([])


def typecheck_envs(ctx: TypeContext, table: MethodTable, state: State, vars: VarEnv,
                   annotated: bool = False) -> Report:
    """env_T、env_S、env_V 的良类型性"""
    tenv = ctx.tenv
    problems: List[str] = []
    for address in sorted(table):
        for name, (params, body) in table[address].items():
            report = typecheck_method(tenv, address, name, params, body)
            problems.extend(report.problems)
    for address in sorted(state):
        t = tenv.address_type(address)
        if t is None:
            problems.append(f"t-envs: 地址 {address} 不在 Γ 中")
            continue
        for name, v in state[address].items():
            ft = tenv.member(t.base.name, name)
            if not isinstance(ft, VarType):
                problems.append(f"t-envf: 接口 {t.base} 未声明字段 {address}.{name}")
            elif not value_has_type(tenv, v, ft):
                problems.append(f"t-envf: {address}.{name} = {v} 不具有类型 {ft}")
    problem = _vars_fail(ctx, vars, strict=not annotated)
    if problem:
        problems.append(problem)
    for p in problems:
        logger.debug("环境类型检查失败: %s", p)
    return Report.of(problems)


def _addresses_in(v: Value) -> List[Addr]:
    if isinstance(v, Addr):
        return [v]
    if isinstance(v, tuple):
        return [a for x in v for a in _addresses_in(x)]
    return []


def _vars_consistent(state: State, vars: VarEnv) -> Optional[str]:
    for name, v in vars.bindings:
        for a in _addresses_in(v):
            if a not in state:
                return f"c-envv: 变量 {name} 指向未知地址 {a}"
    return None


def check_consistency(tenv: TypeEnv, table: MethodTable, state: State, vars: VarEnv) -> Report:
    """环境一致性：成员都有实现、地址值都指向已有合约、dom(env_T) = dom(env_S)"""
    problems: List[str] = []
    if set(table) != set(state):
        problems.append("c-envtsv: dom(env_T) ≠ dom(env_S)")
    for address in sorted(state):
        t = tenv.address_type(address)
        if t is None:
            problems.append(f"c-envs: 地址 {address} 不在 Γ 中")
            continue
        fields = state[address]
        for name in tenv.fields_of(t.base.name):
            if name not in fields:
                problems.append(f"c-envf: 合约 {address} 缺少字段 {name}")
        for name, v in fields.items():
            for a in _addresses_in(v):
                if a not in state:
                    problems.append(f"c-envf: {address}.{name} 指向未知地址 {a}")
    for address in sorted(table):
        t = tenv.address_type(address)
        if t is None:
            problems.append(f"c-envt: 地址 {address} 不在 Γ 中")
            continue
        methods = table[address]
        for name in tenv.methods_of(t.base.name):
            if name not in methods:
                problems.append(f"c-envm: 合约 {address} 缺少方法 {name}")
        for name, (_, body) in methods.items():
            for a in free_addrs(body):
                if a not in state:
                    problems.append(f"c-envm: {address}.{name} 引用未知地址 {a}")
    problem = _vars_consistent(state, vars)
    if problem:
        problems.append(problem)
    return Report.of(problems)


def typecheck_stack(ctx: TypeContext, q: Stack, level: str) -> Report:
    """
    栈的类型规则 t-bot / t-stm / t-del / t-ret

    返回符号带 Δ 时用它类型化剩余栈，否则用 extract(env_V)。
    """
    for i, sym in enumerate(q):
        if isinstance(sym, Del):
            if sym.name not in ctx.delta:
                return Report.of([f"t-del: 变量 {sym.name} 不在 Δ 中（栈位置 {i}）"])
            ctx = ctx.with_delta(ctx.delta.remove(sym.name))
        elif isinstance(sym, Ret):
            strict = sym.delta is not None
            ctx = ctx.with_delta(sym.delta if strict else sym.vars.extract())
            problem = _vars_fail(ctx, sym.vars, strict)
            if problem:
                return Report.of([f"t-ret: {problem}（栈位置 {i}）"])
        elif isinstance(sym, Lvl):
            continue
        else:
            problem = _stm_fail(ctx, sym, level)
            if problem:
                return Report.of([f"t-stm: {problem}（栈位置 {i}）"])
    return Report.of([])


def check_stack_wellformed(ctx: TypeContext, state: State, vars: VarEnv, level: str, q: Stack) -> Report:
    """栈良构性 wf-bot / wf-stm / wf-del / wf-ret / wf-sec"""
    lat = ctx.lattice
    for i, sym in enumerate(q):
        if isinstance(sym, Del):
            if sym.name not in vars:
                return Report.of([f"wf-del: 变量 {sym.name} 不在 env_V 中（栈位置 {i}）"])
            vars = vars.remove(sym.name)
        elif isinstance(sym, Ret):
            if sym.delta is not None:
                problem = _vars_fail(ctx.with_delta(sym.delta), sym.vars, strict=True)
                if problem:
                    return Report.of([f"wf-ret: {problem}（栈位置 {i}）"])
            problem = _vars_consistent(state, sym.vars)
            if problem:
                return Report.of([f"wf-ret: {problem}（栈位置 {i}）"])
            vars = sym.vars
        elif isinstance(sym, Lvl):
            if not lat.leq(sym.level, level):
                return Report.of([f"wf-sec: 栈中级别 {sym.level} ⋢ {level}（栈位置 {i}）"])
            level = sym.level
        else:
            missing_addrs = {a for a in free_addrs(sym) if a not in state}
            if missing_addrs:
                return Report.of([f"wf-stm: 未知地址 {sorted(str(a) for a in missing_addrs)}（栈位置 {i}）"])
            missing_vars = free_vars(sym) - set(vars.names())
            if missing_vars:
                return Report.of([f"wf-stm: 未绑定的变量 {sorted(missing_vars)}（栈位置 {i}）"])
    return Report.of([])


def first_level(q: Stack, lattice) -> str:
    """firstS：自顶向下第一个级别符号，没有则取格底"""
    for sym in q:
        if isinstance(sym, Lvl):
            return sym.level
    return lattice.bottom


# =============================================================================
# 4. s-等价
# =============================================================================

def _visible(lat, t: Optional[LocalType], level: str, v1: Value, v2: Value) -> List[str]:
    """s' ⊑ s ⇒ v1 = v2；返回不满足的分量"""
    if t is None:
        return [] if v1 == v2 else ['']
    if isinstance(t, ArgsType):
        if not (isinstance(v1, tuple) and isinstance(v2, tuple) and len(v1) == len(v2) == len(t.items)):
            return [] if v1 == v2 else ['']
        return [f"[{i}]" for i, (item, a, b) in enumerate(zip(t.items, v1, v2))
                if lat.leq(item.level, level) and a != b]
    return [''] if lat.leq(t.level, level) and v1 != v2 else []


def diff_at_level(ctx: TypeContext, sv1: Tuple[State, VarEnv], sv2: Tuple[State, VarEnv], level: str) -> List[str]:
    """返回在级别 level 下可观察到差异的位置，例如 'Proxy.owner'、'x'"""
    tenv, lat = ctx.tenv, ctx.lattice
    (state1, vars1), (state2, vars2) = sv1, sv2
    diffs: List[str] = []
    if set(state1) != set(state2):
        diffs.append("dom(env_S)")
    for address in sorted(set(state1) & set(state2)):
        f1, f2 = state1[address], state2[address]
        if set(f1) != set(f2):
            diffs.append(f"dom({address})")
            continue
        t = tenv.address_type(address)
        for name in f1:
            ft = tenv.member(t.base.name, name) if t else None
            for suffix in _visible(lat, ft if isinstance(ft, VarType) else None, level, f1[name], f2[name]):
                diffs.append(f"{address}.{name}{suffix}")
    if set(vars1.names()) != set(vars2.names()):
        diffs.append("dom(env_V)")
    else:
        d1, d2 = vars1.as_dict(), vars2.as_dict()
        for name in sorted(d1):
            for suffix in _visible(lat, ctx.delta.get(name), level, d1[name], d2[name]):
                diffs.append(f"{name}{suffix}")
    return diffs


def states_equal_at(ctx: TypeContext, sv1: Tuple[State, VarEnv], sv2: Tuple[State, VarEnv], level: str) -> bool:
    """Γ;Δ ⊢ env_SV¹ =_s env_SV²"""
    diffs = diff_at_level(ctx, sv1, sv2, level)
    if diffs:
        logger.debug("级别 %s 下状态不等价: %s", level, diffs)
    return not diffs


def fields_equal_at(tenv: TypeEnv, interface: str, f1: Dict[str, Value], f2: Dict[str, Value], level: str) -> bool:
    """eq-env_F"""
    if set(f1) != set(f2):
        return False
    for name in f1:
        t = tenv.member(interface, name)
        if _visible(tenv.lattice, t if isinstance(t, VarType) else None, level, f1[name], f2[name]):
            return False
    return True


# =============================================================================
# 5. 程序级检查
# =============================================================================

def check_program(program: Program) -> Report:
    """
    依次检查 Σ 一致性、Γ 良构性、环境良类型与一致性，遇到第一个失败即返回

    fallback 中的 id 调用与缺省方法调用在语法系统中不可类型化，
    这类程序需要语义证书（见 semantic_typing）。
    """
    tenv = program.tenv
    for report in (check_sigma_consistency(tenv), check_gamma_wellformed(tenv)):
        if not report:
            return report
    table, state = elaborate_declarations(program)
    ctx = TypeContext(tenv)
    for report in (typecheck_envs(ctx, table, state, VarEnv()),
                   check_consistency(tenv, table, state, VarEnv())):
        if not report:
            logger.info("程序类型检查失败: %s", report.problems[0])
            return Report.of(report.problems[:1])
    return Report.of([])
