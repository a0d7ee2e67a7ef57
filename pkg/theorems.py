"""
随机化定理检查：保持性、非干扰、强制转换、兼容性、表达式安全与类型化调用完整性

每个检查返回 TheoremResult（status ∈ {pass, fail, skip}），theorem_report 汇总为 DataFrame。
实例由 np.random.default_rng(seed) 生成，结果可复现。skip 表示该实例上没有可检查的内容，
不计入实例数。
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from call_integrity import Transaction, theorem_ci_check, typed_transaction
from config import TheoremConfig
from errors import CertificateError, StuckError, TypedStuckError
from lattice_types import MAGIC_NAMES, Addr, ProcType, Value, VarType
from runtime import CallLabel, Configuration, State, elaborate_declarations, is_terminal, step_untyped
from semantic_typing import SemanticWorld, Triplet, build_interpretation, lower_interpretation
from static_checks import (
    TypeContext, diff_at_level, expr_has_type, first_level, least_type, method_delta, typecheck_stm,
)
from tinysol_syntax import (
    Call, DeclVar, Expr, Field, If, Lit, Lvl, Op, Program, Ret, Seq, Stack, Var, VarEnv, While,
    free_vars, push,
)
from typed_semantics import (
    ReadLog, TypedConfiguration, candidate_values, eval_expr_typed, run_typed,
    step_typed, step_typed_labelled, strip_levels,
)

logger = logging.getLogger(__name__)

THEOREMS = ('preservation', 'noninterference', 'compatibility', 'coercion', 'expr-safety', 'call-integrity')


@dataclass
class TheoremResult:
    theorem: str
    program: str
    instance: int
    status: str
    detail: str = ''
    checks: int = 0         # 本实例上实际比较的配对/步数/表达式数

    @property
    def ok(self) -> bool:
        return self.status != 'fail'


# =============================================================================
# 1. 随机实例
# =============================================================================

def _pick(values: Sequence, rng: np.random.Generator):
    return values[int(rng.integers(len(values)))]


def random_value(program: Program, t: VarType, rng: np.random.Generator) -> Optional[Value]:
    choices = candidate_values(program.tenv, t, (2, 5))
    return _pick(choices, rng) if choices else None


def random_state(program: Program, rng: np.random.Generator) -> State:
    """在初始状态上随机改写字段，保持良类型与一致性"""
    tenv = program.tenv
    _, state = elaborate_declarations(program)
    state = {a: dict(fields) for a, fields in state.items()}
    for address in sorted(state, key=str):
        iface = tenv.address_type(address).base.name
        for f, t in sorted(tenv.fields_of(iface).items()):
            if f == 'balance':
                state[address][f] = int(rng.integers(0, 6))
                continue
            v = random_value(program, t, rng)
            if v is not None:
                state[address][f] = v
    return state


def random_transaction(program: Program, rng: np.random.Generator, length: int = 3) -> Transaction:
    """随机挑选调用者、被调合约上已声明的方法与实参；金额多为 0"""
    tenv = program.tenv
    addresses = sorted(program.addresses)
    entries: Transaction = []
    for _ in range(length):
        caller = Addr(_pick(addresses, rng))
        callee = _pick(addresses, rng)
        iface = tenv.address_type(callee).base.name
        methods = [(m, sig) for m, sig in sorted(tenv.methods_of(iface).items()) if m != 'fallback']
        method, sig = _pick(methods, rng)
        args = tuple(Lit(random_value(program, p, rng)) for p in sig.params)
        amount = 1 if rng.random() < 0.2 else 0
        entries.append((caller, Call(Lit(Addr(callee)), method, args, Lit(amount))))
    return entries


def perturb_above(program: Program, state: State, observer: str, rng: np.random.Generator) -> State:
    """只改写 observer 看不到的字段，得到一个 observer-等价的状态"""
    tenv = program.tenv
    lat = tenv.lattice
    other = {a: dict(fields) for a, fields in state.items()}
    for address in sorted(other, key=str):
        iface = tenv.address_type(address).base.name
        for f, t in sorted(tenv.fields_of(iface).items()):
            if lat.leq(t.level, observer):
                continue
            v = int(rng.integers(0, 6)) if f == 'balance' else random_value(program, t, rng)
            if v is not None:
                other[address][f] = v
    return other


def perturb_vars(program: Program, ctx: TypeContext, vars: VarEnv, observer: str,
                 rng: np.random.Generator) -> VarEnv:
    """改写 observer 看不到的普通变量；魔术变量由调用决定，保持不变"""
    lat = ctx.lattice
    for name in vars.names():
        t = ctx.delta.get(name)
        if name in MAGIC_NAMES or not isinstance(t, VarType) or lat.leq(t.level, observer):
            continue
        v = random_value(program, t, rng)
        if v is not None:
            vars = vars.assign(name, v)
    return vars


@dataclass
class ExprSample:
    """某个方法的 Δ 下的一组表达式，以及一个随机的良类型状态与变量环境"""
    where: str
    ctx: TypeContext
    state: State
    vars: VarEnv
    exprs: List[Expr]


def _methods(program: Program):
    tenv = program.tenv
    for contract in program.contracts:
        iface = tenv.address_type(contract.address).base.name
        for m in contract.methods:
            sig = tenv.member(iface, m.name)
            if isinstance(sig, ProcType):
                yield Addr(contract.address), m.name, m.params, m.body, sig


def _expressions(node) -> Iterable[Expr]:
    if isinstance(node, (Lit, Var, Field, Op)):
        yield node
        children = [node.target] if isinstance(node, Field) else list(getattr(node, 'args', ()))
        for child in children:
            yield from _expressions(child)
    elif isinstance(node, Seq):
        yield from _expressions(node.first)
        yield from _expressions(node.second)
    elif isinstance(node, If):
        yield from _expressions(node.cond)
        yield from _expressions(node.then)
        yield from _expressions(node.orelse)
    elif isinstance(node, While):
        yield from _expressions(node.cond)
        yield from _expressions(node.body)
    elif isinstance(node, DeclVar):
        yield from _expressions(node.expr)
    elif isinstance(node, Call):
        yield from _expressions(node.target)
        yield from _expressions(node.amount)
        for a in node.args:
            yield from _expressions(a)
    elif hasattr(node, 'expr'):
        yield from _expressions(node.expr)


def sample_expressions(program: Program, rng: np.random.Generator) -> ExprSample:
    """随机挑一个方法，取其方法体中在方法 Δ 下可类型化的表达式"""
    methods = list(_methods(program))
    address, method, params, body, sig = _pick(methods, rng)
    tenv = program.tenv
    ctx = TypeContext(tenv, method_delta(tenv, address, params, sig))
    values = {}
    for x, t in ctx.delta.items():
        v = address if x == 'this' else (random_value(program, t, rng) if isinstance(t, VarType) else None)
        if v is not None:
            values[x] = v
    env = VarEnv.of(values)
    exprs = [e for e in dict.fromkeys(_expressions(body))
             if free_vars(e) <= set(env.names()) and least_type(ctx, e) is not None]
    return ExprSample(f"{address}.{method}", ctx, random_state(program, rng), env, exprs)


# =============================================================================
# 2. 动态定理
# =============================================================================

def check_preservation(program: Program, tx: Transaction, state: State, name: str = '',
                       instance: int = 0, max_steps: int = 2000) -> TheoremResult:
    """每一步之后仍良类型、一致、良构，且执行级别之下的字段不变"""
    result = run_typed(typed_transaction(program, tx, state), max_steps, assert_preservation=True)
    if result.status == 'preservation-violated':
        return TheoremResult('preservation', name, instance, 'fail', result.reason, result.steps)
    if result.steps == 0:
        return TheoremResult('preservation', name, instance, 'skip', result.status)
    return TheoremResult('preservation', name, instance, 'pass', result.status, result.steps)


def _call_part(label: Optional[CallLabel]):
    return None if label is None else (label.caller, label.callee, label.method, label.amount)


def noninterference_step(program: Program, tc: TypedConfiguration, observer: str,
                         rng: np.random.Generator) -> Tuple[bool, str]:
    """
    从 tc 出发构造一个 observer-等价的配对（同一栈与 Δ，改写 observer 看不到的字段和变量），
    双方各走一步后比较。返回 (是否完成比较, 问题描述)。

    两步的调用目标不同时，只有执行级别 ⋢ observer 才允许；此时被调方的变量环境不可比，只比较字段。
    """
    lat = tc.ctx.lattice
    c = tc.config
    other = TypedConfiguration(tc.ctx, tc.level, replace(
        c, state=perturb_above(program, c.state, observer, rng),
        vars=perturb_vars(program, tc.ctx, c.vars, observer, rng)))
    try:
        r1 = step_typed_labelled(tc)
        r2 = step_typed_labelled(other)
    except (TypedStuckError, StuckError):
        return False, ''
    if r1 is None or r2 is None:
        return False, ''
    (n1, l1), (n2, l2) = r1, r2
    same_call = _call_part(l1) == _call_part(l2)
    if not same_call and lat.leq(n1.level, observer):
        return True, f"{observer} 级可观察到不同的调用: {l1} / {l2}"
    if same_call and n1.ctx.delta == n2.ctx.delta:
        diffs = diff_at_level(n1.ctx, (n1.config.state, n1.config.vars), (n2.config.state, n2.config.vars), observer)
    else:
        diffs = diff_at_level(n1.ctx, (n1.config.state, VarEnv()), (n2.config.state, VarEnv()), observer)
    if diffs:
        return True, f"{type(c.stack[0]).__name__} 之后 {observer} 级可区分: {diffs}"
    return True, ''


def check_noninterference(program: Program, tx: Transaction, state: State, rng: np.random.Generator,
                          name: str = '', instance: int = 0, max_steps: int = 200,
                          max_pairs: int = 40) -> TheoremResult:
    """
    沿交易的类型化执行逐步检查：每个中间配置、每个观察级别各构造一个等价配对并各走一步，
    结果仍在该级别等价
    """
    lat = program.lattice
    tc = typed_transaction(program, tx, state)
    pairs = 0
    for _ in range(max_steps):
        if is_terminal(tc.stack) or pairs >= max_pairs:
            break
        for observer in lat.levels:
            checked, problem = noninterference_step(program, tc, observer, rng)
            if problem:
                return TheoremResult('noninterference', name, instance, 'fail', problem, pairs + 1)
            pairs += checked
        try:
            tc = step_typed(tc)
        except (TypedStuckError, StuckError):
            break
    if pairs == 0:
        return TheoremResult('noninterference', name, instance, 'skip', '没有可比较的配对')
    return TheoremResult('noninterference', name, instance, 'pass', f"{pairs} 对", pairs)


def _unannotated(q):
    return tuple(Ret(sym.vars.plain()) if isinstance(sym, Ret) else sym for sym in q)


def check_compatibility(program: Program, tx: Transaction, state: State, name: str = '',
                        instance: int = 0, max_steps: int = 2000) -> TheoremResult:
    """类型化的每一步都对应去掉级别后的非类型化一步（lvl 弹出除外），状态、变量与标签一致"""
    tc = typed_transaction(program, tx, state)
    for step in range(max_steps):
        if is_terminal(tc.stack):
            break
        c = tc.config
        untyped = Configuration(strip_levels(c.stack), c.table, c.state, c.vars)
        try:
            result = step_typed_labelled(tc)
        except (TypedStuckError, StuckError) as err:
            logger.debug("兼容性检查在第 %d 步停止: %s", step, err)
            break
        nxt, label = result
        if _unannotated(strip_levels(nxt.stack)) == _unannotated(untyped.stack):
            tc = nxt
            continue
        try:
            u_next, u_label = step_untyped(untyped)
        except StuckError as err:
            return TheoremResult('compatibility', name, instance, 'fail', f"非类型化卡住: {err}", step)
        n = nxt.config
        if (u_next.state != n.state or u_next.vars.bindings != n.vars.bindings
                or u_label != label or _unannotated(u_next.stack) != _unannotated(strip_levels(n.stack))):
            return TheoremResult('compatibility', name, instance, 'fail', f"第 {step} 步结果不一致", step)
        tc = nxt
    else:
        step = max_steps
    if step == 0:
        return TheoremResult('compatibility', name, instance, 'skip', '第一步即卡住')
    return TheoremResult('compatibility', name, instance, 'pass', f"{step} 步", step)


def _same_reduct(q1: Stack, q2: Stack, s1: str, s2: str) -> bool:
    """两个归约结果只在压入的执行级别上不同：q1 中的 Lvl(s1) 对应 q2 中的 Lvl(s2)"""
    return len(q1) == len(q2) and all(
        a == b or (a == Lvl(s1) and b == Lvl(s2)) for a, b in zip(q1, q2))


def stack_coercion_step(tc: TypedConfiguration) -> Tuple[int, str]:
    """
    tc 在其级别 s1 上可以走一步时，对每个 first_level(Q) ⊑ s2 ⊑ s1 在 s2 上也走一步，
    结果的状态、变量、Δ、标签一致，栈只在压入的级别上不同。返回 (比较次数, 问题描述)
    """
    lat = tc.ctx.lattice
    s1 = tc.level
    try:
        r1 = step_typed_labelled(tc)
    except (TypedStuckError, StuckError):
        return 0, ''
    if r1 is None:
        return 0, ''
    n1, l1 = r1
    lower = [s2 for s2 in lat.levels
             if s2 != s1 and lat.leq(s2, s1) and lat.leq(first_level(tc.stack, lat), s2)]
    for s2 in lower:
        try:
            n2, l2 = step_typed_labelled(replace(tc, level=s2))
        except (TypedStuckError, StuckError) as err:
            return 1, f"在 {s1} 可执行但在 {s2} 卡住: {err}"
        same = (n1.config.state == n2.config.state and n1.config.vars == n2.config.vars
                and n1.ctx.delta == n2.ctx.delta and l1 == l2
                and _same_reduct(n1.stack, n2.stack, s1, s2))
        if not same:
            return 1, f"{type(tc.stack[0]).__name__} 在 {s1} 与 {s2} 上的归约结果不同"
    return len(lower), ''


def expr_coercion_problems(sample: ExprSample) -> Tuple[int, List[str]]:
    """在最小级别求值成功的表达式，在任意更高级别求值得到同一个值"""
    ctx = sample.ctx
    lat = ctx.lattice
    checks, problems = 0, []
    for e in sample.exprs:
        t = least_type(ctx, e)
        try:
            v = eval_expr_typed(ctx, (t.base, t.level), e, sample.state, sample.vars)
        except StuckError:
            continue
        if v is None:
            continue
        for s in lat.above(t.level)[1:]:
            checks += 1
            if eval_expr_typed(ctx, (t.base, s), e, sample.state, sample.vars) != v:
                problems.append(f"{sample.where}: 表达式在 {t.level} 得 {v}，在 {s} 不同")
    return checks, problems


def check_coercion(program: Program, tx: Transaction, state: State, rng: np.random.Generator,
                   name: str = '', instance: int = 0, max_steps: int = 200) -> TheoremResult:
    """栈的强制转换沿交易的类型化执行逐步检查；表达式的强制转换在一个随机方法样本上检查"""
    checks, problems = expr_coercion_problems(sample_expressions(program, rng))
    tc = typed_transaction(program, tx, state)
    for _ in range(max_steps):
        if is_terminal(tc.stack) or problems:
            break
        n, problem = stack_coercion_step(tc)
        checks += n
        if problem:
            problems.append(problem)
            break
        try:
            tc = step_typed(tc)
        except (TypedStuckError, StuckError):
            break
    if problems:
        return TheoremResult('coercion', name, instance, 'fail', '; '.join(problems), checks)
    if checks == 0:
        return TheoremResult('coercion', name, instance, 'skip', '没有可降级的步骤或表达式')
    return TheoremResult('coercion', name, instance, 'pass', f"{checks} 项", checks)


def check_expr_safety(program: Program, rng: np.random.Generator, name: str = '',
                      instance: int = 0) -> TheoremResult:
    """良类型表达式在良类型状态上求值不卡住，结果属于其类型，且只读取级别 ⊑ 其级别的容器"""
    sample = sample_expressions(program, rng)
    ctx = sample.ctx
    tenv, lat = ctx.tenv, ctx.lattice
    problems: List[str] = []
    for e in sample.exprs:
        t = least_type(ctx, e)
        log = ReadLog()
        try:
            v = eval_expr_typed(ctx, (t.base, t.level), e, sample.state, sample.vars, log)
        except StuckError as err:
            problems.append(f"{sample.where}: 求值卡住 {err}")
            continue
        actual = tenv.type_of(v) if v is not None else None
        if actual is None or not tenv.is_subtype(actual.base, t.base):
            problems.append(f"{sample.where}: 结果 {v} 不属于 {t}")
        leaks = [c for c, level in log.reads if not lat.leq(level, t.level)]
        if leaks:
            problems.append(f"{sample.where}: 读取了高于 {t.level} 的容器 {leaks}")
    checks = len(sample.exprs)
    if problems:
        return TheoremResult('expr-safety', name, instance, 'fail', '; '.join(problems), checks)
    if checks == 0:
        return TheoremResult('expr-safety', name, instance, 'skip', f"{sample.where} 没有表达式")
    return TheoremResult('expr-safety', name, instance, 'pass', sample.where, checks)


def check_call_integrity(program: Program, tx: Transaction, rng: np.random.Generator,
                         name: str = '', instance: int = 0) -> TheoremResult:
    ci = theorem_ci_check(program, tx, seed=int(rng.integers(1 << 30)))
    if ci.status == 'fail':
        return TheoremResult('call-integrity', name, instance, 'fail', ci.detail, 1)
    if not ci.compared:
        return TheoremResult('call-integrity', name, instance, 'skip', ci.detail)
    return TheoremResult('call-integrity', name, instance, 'pass', ci.detail, 1)


# =============================================================================
# 3. 静态定理
# =============================================================================

def check_static_coercion(program: Program, name: str = '') -> List[TheoremResult]:
    """
    语句在 s1 可类型化则在任意 s2 ⊑ s1 可类型化；表达式类型可以向上提升；
    方法体的类型解释可以从签名级别降到任意更低的级别
    """
    tenv = program.tenv
    lat = tenv.lattice
    world = SemanticWorld.of(program)
    results: List[TheoremResult] = []
    for i, (address, method, params, body, sig) in enumerate(_methods(program)):
        ctx = TypeContext(tenv, method_delta(tenv, address, params, sig))
        where = f"{address}.{method}"
        problems: List[str] = []
        for s1 in lat.levels:
            if not typecheck_stm(ctx, body, s1):
                continue
            problems += [f"{where}: {s1} 可类型化但 {s2} 不可" for s2 in lat.levels
                         if lat.leq(s2, s1) and not typecheck_stm(ctx, body, s2)]
        for e in _expressions(body):
            if not free_vars(e) <= set(ctx.delta.names()):
                continue
            t = least_type(ctx, e)
            if t is None:
                continue
            problems += [f"{where}: 表达式不能提升到 {s}" for s in lat.levels
                         if lat.leq(t.level, s) and not expr_has_type(ctx, e, t.base, s)]
        built = build_interpretation(world, Triplet(push(body), ctx.delta, sig.level))
        if built.ok:
            for s2 in lat.levels:
                if lat.leq(s2, sig.level) and s2 != sig.level:
                    try:
                        lower_interpretation(world, built.triplets, sig.level, s2)
                    except CertificateError as err:
                        problems.append(f"{where}: 无法降到 {s2}: {err}")
        results.append(TheoremResult('static-coercion', name, i, 'fail' if problems else 'pass',
                                     '; '.join(problems), 1))
    return results



# =============================================================================
# 4. 批量运行与汇总
# =============================================================================

def run_theorems(programs: Sequence[Tuple[str, Program]], config: Optional[TheoremConfig] = None,
                 tx_length: int = 3) -> List[TheoremResult]:
    """
    每个程序先检查一次静态强制转换；之后轮流在各程序上抽取随机实例，直到每个动态定理都有
    config.instances 个非 skip 结果、非干扰累计比较 config.ni_pairs 对，或抽取次数用完
    """
    config = config or TheoremConfig()
    rng = config.rng()
    results: List[TheoremResult] = []
    for name, program in programs:
        results += check_static_coercion(program, name)

    counts = dict.fromkeys(THEOREMS, 0)
    ni_pairs = 0
    attempts = config.max_attempts or config.instances * 10
    for instance in range(attempts):
        if ni_pairs >= config.ni_pairs and all(n >= config.instances for n in counts.values()):
            break
        name, program = programs[instance % len(programs)]
        state = random_state(program, rng)
        tx = random_transaction(program, rng, tx_length)
        checks: List[Tuple[str, Callable[[], TheoremResult]]] = [
            ('preservation', lambda: check_preservation(program, tx, state, name, instance)),
            ('noninterference', lambda: check_noninterference(program, tx, state, rng, name, instance)),
            ('compatibility', lambda: check_compatibility(program, tx, state, name, instance)),
            ('coercion', lambda: check_coercion(program, tx, state, rng, name, instance)),
            ('expr-safety', lambda: check_expr_safety(program, rng, name, instance)),
            ('call-integrity', lambda: check_call_integrity(program, tx, rng, name, instance)),
        ]
        for theorem, check in checks:
            wanted = counts[theorem] < config.instances
            if theorem == 'noninterference':
                wanted = wanted or ni_pairs < config.ni_pairs
            if not wanted:
                continue
            r = check()
            results.append(r)
            if r.status != 'skip':
                counts[theorem] += 1
            if theorem == 'noninterference':
                ni_pairs += r.checks

    short = {t: n for t, n in counts.items() if n < config.instances}
    if short:
        logger.warning("%d 次抽取后以下定理实例不足 %d: %s", attempts, config.instances, short)
    failed = [r for r in results if r.status == 'fail']
    logger.info("定理检查完成: %d 项, %d 项失败, 非干扰配对 %d", len(results), len(failed), ni_pairs)
    return results


def checked_instances(results: Iterable[TheoremResult]) -> Dict[str, int]:
    """每个定理的非 skip 结果数"""
    counts: Dict[str, int] = {}
    for r in results:
        if r.status != 'skip':
            counts[r.theorem] = counts.get(r.theorem, 0) + 1
    return counts


def theorem_report(results: Iterable[TheoremResult]) -> pd.DataFrame:
    """按定理汇总 pass/fail/skip 计数与实际比较次数"""
    columns = ['theorem', 'pass', 'fail', 'skip', 'checks']
    df = pd.DataFrame([vars(r) for r in results],
                      columns=['theorem', 'program', 'instance', 'status', 'detail', 'checks'])
    if df.empty:
        return pd.DataFrame(columns=columns)
    counts = df.groupby(['theorem', 'status']).size().unstack(fill_value=0)
    for col in ('pass', 'fail', 'skip'):
        if col not in counts:
            counts[col] = 0
    counts['checks'] = df.groupby('theorem')['checks'].sum()
    return counts[['pass', 'fail', 'skip', 'checks']].reset_index()
