"""
语义类型：类型提升转换、类型解释的构建与验证、语义类型规则（含 st-fcall）
以及 up-to union 证书

三元组 (Q, Δ, s) 抽象掉具体状态；一个三元组的后继通过在若干个按 Δ/Γ
构造的状态上执行一次类型化单步得到。类型解释是在后继下封闭、且每个非终止
成员都至少有一个后继的三元组集合。
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple, Union

from config import SearchBudget
from errors import CertificateError, ConsistencyError, StuckError, TypedStuckError
from lattice_types import IDF, INT, ITOP, Addr, ArgsType, Delta, ProcType, TypeEnv, VarType, iface
from runtime import Configuration, MethodTable, elaborate_declarations, is_terminal
from static_checks import (
    UNTYPABLE_CALL, TypeContext, _stm_fail, call_problem, expr_has_type, first_level, least_type,
    method_delta, typecheck_vars,
)
from tinysol_syntax import (
    ID_REF, AssignField, AssignVar, Call, DCall, DeclVar, Del, If, Lvl, Program, Ret, Seq,
    Skip, Stack, Stm, Throw, While, pretty_expr, pretty_stack, push, uses_args,
)
from typed_semantics import (
    TypedConfiguration, canonical_vars, decision_exprs, enumerate_branch_states,
    step_typed_labelled,
)

logger = logging.getLogger(__name__)


# =============================================================================
# 1. 三元组与转换系统
# =============================================================================

@dataclass(frozen=True)
class Triplet:
    """栈类型三元组 (Q, Δ, s)；结构相等即集合成员身份"""
    stack: Stack
    delta: Delta
    level: str

    def key(self) -> Tuple[str, str, str]:
        return (pretty_stack(self.stack), str(self.delta), self.level)

    def __str__(self) -> str:
        return f"({pretty_stack(self.stack)}, {{{self.delta}}}, {self.level})"


TripletSet = FrozenSet[Triplet]


def stm_triplet(s: Stm, delta: Delta, level: str) -> Triplet:
    """(S; ⊥, Δ, s)"""
    return Triplet(push(s), delta, level)


@dataclass
class SemanticWorld:
    """全局上下文 (Σ, Γ, env_T)"""
    tenv: TypeEnv
    table: MethodTable

    @classmethod
    def of(cls, program: Program) -> 'SemanticWorld':
        table, _ = elaborate_declarations(program)
        return cls(program.tenv, table)

    @property
    def lattice(self):
        return self.tenv.lattice


@dataclass(frozen=True)
class Lifted:
    """
    一个三元组的提升转换

    kind: 'terminal'（Q ∈ TQ）、'none'（没有任何转换）或 'step'。
    stuck 非空表示至少一种状态实现卡住；这样的三元组不能属于类型解释。
    """
    kind: str
    successors: FrozenSet[Triplet] = frozenset()
    stuck: Tuple[str, ...] = ()

    @property
    def safe(self) -> bool:
        return self.kind == 'terminal' or (self.kind == 'step' and not self.stuck)

    @property
    def reason(self) -> str:
        return '; '.join(self.stuck) if self.stuck else ''


def canonical_stack(tenv: TypeEnv, q: Stack) -> Stack:
    """返回符号中的 env_V 快照换成按其 Δ 构造的规范值"""
    return tuple(Ret(canonical_vars(tenv, sym.delta), sym.delta)
                 if isinstance(sym, Ret) and sym.delta is not None else sym
                 for sym in q)


class TransitionSystem:
    """带记忆化的类型提升转换 (Q, Δ, s) ⇒ (Q', Δ', s')"""

    def __init__(self, world: SemanticWorld, budget: Optional[SearchBudget] = None,
                 strict_transfer: bool = False):
        self.world = world
        self.budget = budget or SearchBudget()
        self.strict_transfer = strict_transfer
        self._cache: Dict[Triplet, Lifted] = {}

    def successors(self, t: Triplet) -> Lifted:
        if t not in self._cache:
            self._cache[t] = self._lift(t)
        return self._cache[t]

    def _lift(self, t: Triplet) -> Lifted:
        if is_terminal(t.stack):
            return Lifted('terminal')
        tenv = self.world.tenv
        ctx = TypeContext(tenv, t.delta)
        try:
            realizations = enumerate_branch_states(ctx, decision_exprs(t.stack[0]), self.budget)
        except ConsistencyError as err:
            logger.debug("无法构造状态 %s: %s", t, err)
            return Lifted('none', stuck=(f"构造失败: {err}",))

        successors: Set[Triplet] = set()
        stuck: List[str] = []
        for state, vars in realizations:
            tc = TypedConfiguration(ctx, t.level, Configuration(t.stack, self.world.table, state, vars))
            try:
                nxt, _ = step_typed_labelled(tc, self.strict_transfer)
            except (TypedStuckError, StuckError) as err:
                if str(err) not in stuck:
                    stuck.append(str(err))
                continue
            successors.add(Triplet(canonical_stack(tenv, nxt.stack), nxt.delta, nxt.level))
        if not successors:
            return Lifted('none', stuck=tuple(stuck))
        return Lifted('step', frozenset(successors), tuple(stuck))


def lifted_successors(world: SemanticWorld, t: Triplet, budget: Optional[SearchBudget] = None,
                      strict_transfer: bool = False) -> Lifted:
    return TransitionSystem(world, budget, strict_transfer).successors(t)


# =============================================================================
# 2. 进展与类型解释
# =============================================================================

@dataclass
class Verdict:
    """判定结果；失败时 member/successor 给出第一个反例"""
    ok: bool
    member: Optional[Triplet] = None
    successor: Optional[Triplet] = None
    reason: str = ''

    def __bool__(self) -> bool:
        return self.ok

    @classmethod
    def fail(cls, reason: str, member: Optional[Triplet] = None,
             successor: Optional[Triplet] = None) -> 'Verdict':
        return cls(False, member, successor, reason)


def _sorted(triplets: Iterable[Triplet]) -> List[Triplet]:
    return sorted(triplets, key=Triplet.key)


def check_progression(world: SemanticWorld, lhs: Iterable[Triplet], rhs: Iterable[Triplet],
                      system: Optional[TransitionSystem] = None,
                      skip: Iterable[Triplet] = ()) -> Verdict:
    """
    Ř ⤳ Ř̂：lhs 的每个成员要么终止，要么至少有一个后继且所有后继都在 rhs 中

    skip 中的成员不检查（由别处保证）。
    """
    system = system or TransitionSystem(world)
    rhs_set = frozenset(rhs)
    skipped = frozenset(skip)
    for member in _sorted(lhs):
        if member in skipped:
            continue
        lifted = system.successors(member)
        if lifted.kind == 'terminal':
            continue
        if lifted.kind == 'none':
            return Verdict.fail(f"没有类型提升转换: {lifted.reason}", member)
        if lifted.stuck:
            return Verdict.fail(f"部分状态实现卡住: {lifted.reason}", member)
        for succ in _sorted(lifted.successors):
            if succ not in rhs_set:
                return Verdict.fail("后继不在集合中", member, succ)
    return Verdict(True)


def verify_typing_interpretation(world: SemanticWorld, cand: Iterable[Triplet],
                                 system: Optional[TransitionSystem] = None) -> Verdict:
    """Ř 是类型解释 ⇔ Ř ⤳ Ř"""
    cand = frozenset(cand)
    verdict = check_progression(world, cand, cand, system)
    logger.info("类型解释验证 (%d 个三元组): %s", len(cand), 'PASS' if verdict else verdict.reason)
    return verdict


@dataclass
class BuildResult:
    """status ∈ {full, untypable, unknown}"""
    status: str
    triplets: TripletSet = frozenset()
    witness: List[str] = field(default_factory=list)
    reason: str = ''

    @property
    def ok(self) -> bool:
        return self.status == 'full'


def _path(parents: Dict[Triplet, Optional[Triplet]], t: Triplet) -> List[str]:
    path = []
    node: Optional[Triplet] = t
    while node is not None:
        path.append(str(node))
        node = parents[node]
    return path[::-1]


def build_interpretation(world: SemanticWorld, root: Triplet, budget: Optional[SearchBudget] = None,
                         system: Optional[TransitionSystem] = None) -> BuildResult:
    """
    从 root 出发对类型提升转换做广度优先闭包

    遇到卡住的非终止三元组返回 untypable 与路径；超出预算返回 unknown。
    """
    budget = budget or SearchBudget()
    system = system or TransitionSystem(world, budget)
    parents: Dict[Triplet, Optional[Triplet]] = {root: None}
    queue = deque([(root, 0)])
    while queue:
        t, depth = queue.popleft()
        lifted = system.successors(t)
        if lifted.kind == 'terminal':
            continue
        if not lifted.safe:
            reason = lifted.reason or "没有类型提升转换"
            logger.info("三元组不可类型化: %s", reason)
            return BuildResult('untypable', frozenset(parents), _path(parents, t) + [reason], reason)
        for succ in _sorted(lifted.successors):
            if succ in parents:
                continue
            if depth + 1 > budget.max_depth:
                return BuildResult('unknown', frozenset(parents), reason=f"超过最大深度 {budget.max_depth}")
            parents[succ] = t
            if len(parents) > budget.max_triplets:
                return BuildResult('unknown', frozenset(parents), reason=f"超过最多 {budget.max_triplets} 个三元组")
            queue.append((succ, depth + 1))
    logger.info("构建类型解释完成: %d 个三元组", len(parents))
    return BuildResult('full', frozenset(parents))


def union_interpretations(*sets: Iterable[Triplet]) -> TripletSet:
    result: Set[Triplet] = set()
    for s in sets:
        result.update(s)
    return frozenset(result)


def lower_interpretation(world: SemanticWorld, cand: Iterable[Triplet], s1: str, s2: str,
                         budget: Optional[SearchBudget] = None) -> TripletSet:
    """
    强制转换：把与根同层（级别为 s1 且 firstS(Q) ⊑ s2）的三元组降到 s2，
    并补上降级后三元组的后继闭包

    Raises
    ------
    CertificateError
        s1 ⋣ s2，或降级后的三元组卡住 / 超出预算
    """
    lat = world.lattice
    if not lat.leq(s2, s1):
        raise CertificateError(f"级别 {s2} ⋢ {s1}，无法降级")
    cand = frozenset(cand)
    lowered = [Triplet(t.stack, t.delta, s2) for t in cand
               if t.level == s1 and lat.leq(first_level(t.stack, lat), s2)]
    system = TransitionSystem(world, budget)
    result: Set[Triplet] = set(cand)
    for t in _sorted(lowered):
        if t in result:
            continue
        built = build_interpretation(world, t, budget, system)
        if not built.ok:
            raise CertificateError(f"降级后的三元组 {t} 无法闭包: {built.reason}")
        result |= built.triplets
    return frozenset(result)


# =============================================================================
# 3. 语义类型规则
# =============================================================================

@dataclass
class Obligation:
    """st-fcall 的 fallback 前提 (S;⊥, Δ', s)，既不能由规则导出也没有已验证的解释"""
    address: str
    triplet: Triplet
    reason: str

    def __str__(self) -> str:
        return f"st-fcall: {self.address}.fallback {self.triplet} 需要类型解释 ({self.reason})"


@dataclass
class SemResult:
    ok: bool
    problems: List[str] = field(default_factory=list)
    obligations: List[Obligation] = field(default_factory=list)
    used: FrozenSet[Triplet] = frozenset()

    def __bool__(self) -> bool:
        return self.ok

    @property
    def reason(self) -> str:
        return '; '.join(self.problems + [str(o) for o in self.obligations])


def fallback_delta(tenv: TypeEnv, address: str, level: str, args: ArgsType = ArgsType()) -> Delta:
    """st-fcall 中 fallback 体的 Δ'"""
    t = tenv.address_type(address)
    return Delta.of({
        'this': VarType(t.base, t.level),
        'value': VarType(INT, level),
        'sender': VarType(iface(ITOP), tenv.lattice.top),
        'id': VarType(IDF, level),
        'args': args,
    })


def fallback_root(world: SemanticWorld, address: str, level: Optional[str] = None,
                  args: ArgsType = ArgsType()) -> Triplet:
    """
    合约 fallback 体的根三元组 (S;⊥, Δ', s)

    level 缺省取合约自身的安全级别，即 st-fcall 可使用的最低级别。
    """
    t = world.tenv.address_type(address)
    if t is None:
        raise CertificateError(f"地址 {address} 不在 Γ 中")
    level = level or t.level
    world.lattice.check(level)
    methods = world.table.get(Addr(address))
    if methods is None:
        raise CertificateError(f"方法表中没有地址 {address}")
    _, body = methods['fallback']
    return stm_triplet(body, fallback_delta(world.tenv, address, level, args), level)


class _SemChecker:
    """
    语义类型规则的判定器

    known 为已验证类型解释中的三元组，可直接满足 st-fcall 的前提；
    正在检查的前提按余归纳假设成立。
    """

    def __init__(self, world: SemanticWorld, known: Iterable[Triplet] = ()):
        self.world = world
        self.known = frozenset(known)
        self.obligations: List[Obligation] = []
        self._pending: Set[Triplet] = set()
        self._failed: Set[Triplet] = set()
        self.used: Set[Triplet] = set()

    # --- 语句 -----------------------------------------------------------------

    def stm(self, ctx: TypeContext, s: Stm, level: str) -> Optional[str]:
        lat = ctx.lattice
        if isinstance(s, (Skip, Throw)):
            return None
        if isinstance(s, Seq):
            return self.stm(ctx, s.first, level) or self.stm(ctx, s.second, level)
        if isinstance(s, (If, While)):
            rule = 'st-if' if isinstance(s, If) else 'st-while'
            guard = least_type(ctx, s.cond)
            if guard is None or guard.base.kind != 'bool':
                return f"{rule}: 条件 {pretty_expr(s.cond)} 不是布尔表达式"
            raised = lat.join(level, guard.level)
            branches = (s.then, s.orelse) if isinstance(s, If) else (s.body,)
            for branch in branches:
                problem = self.stm(ctx, branch, raised)
                if problem:
                    return problem
            return None
        if isinstance(s, DeclVar):
            if not expr_has_type(ctx, s.expr, s.vtype.base, s.vtype.level):
                return f"st-decv: {pretty_expr(s.expr)} 不具有类型 {s.vtype}"
            return self.stm(ctx.with_delta(ctx.delta.bind(s.name, s.vtype)), s.body, level)
        if isinstance(s, (AssignVar, AssignField, DCall)):
            problem = _stm_fail(ctx, s, level)
            return problem.replace('t-', 'st-', 1) if problem else None
        if isinstance(s, Call):
            return self.call(ctx, s, level)
        return f"未知语句 {s!r}"

    def call(self, ctx: TypeContext, s: Call, level: str) -> Optional[str]:
        if s.method == ID_REF:
            return f"st-call: {UNTYPABLE_CALL}"
        target = least_type(ctx, s.target)
        if target is None or not target.base.is_interface:
            return f"st-call: 调用目标 {pretty_expr(s.target)} 不是接口类型"
        tenv = self.world.tenv
        if any(isinstance(tenv.member(name, s.method), ProcType) for name in tenv.ancestors(target.base.name)):
            problem = call_problem(ctx, s, level)
            return problem.replace('t-call', 'st-call') if problem else None
        return self.fcall(ctx, s, level, target)

    def fcall(self, ctx: TypeContext, s: Call, level: str, target) -> Optional[str]:
        """st-fcall：对每个可能的被调地址，其 fallback 体在调用级别下语义安全"""
        tenv, lat = ctx.tenv, ctx.lattice
        this = ctx.delta.get('this')
        if not isinstance(this, VarType) or not this.base.is_interface:
            return "st-fcall: Δ(this) 不是接口类型"
        amount = least_type(ctx, s.amount)
        if amount is None or amount.base != INT:
            return f"st-fcall: 金额 {pretty_expr(s.amount)} 不是整数表达式"
        if uses_args(s.args):
            args = ctx.delta.get('args')
            if not isinstance(args, ArgsType):
                return f"st-fcall: {UNTYPABLE_CALL}"
        else:
            items = []
            for a in s.args:
                least = least_type(ctx, a)
                if least is None:
                    return f"st-fcall: 实参 {pretty_expr(a)} 不可类型化"
                items.append(VarType(least.base, least.level))
            args = ArgsType(tuple(items))
        sp = lat.join_all([level, this.level, target.level, amount.level])
        s3 = tenv.member(this.base.name, 'balance').level
        s4 = tenv.member(target.base.name, 'balance').level
        if not lat.leq_all(sp, (s3, s4)):
            return f"st-fcall: s = {sp} ⋢ 余额级别 {s3}, {s4}"
        for address in tenv.admissible_addresses(target.base, sp):
            if address not in self.world.table:
                return f"st-fcall: 方法表中没有地址 {address}"
            _, body = self.world.table[address]['fallback']
            premise = stm_triplet(body, fallback_delta(tenv, address.name, sp, args), sp)
            self.discharge(address.name, premise)
        return None

    def discharge(self, address: str, premise: Triplet) -> None:
        if premise in self.known:
            self.used.add(premise)
            return
        if premise in self._pending:
            return
        if premise in self._failed:
            return
        self._pending.add(premise)
        try:
            problem = self.stack(premise.delta, premise.stack, premise.level)
        finally:
            self._pending.discard(premise)
        if problem:
            self._failed.add(premise)
            self.obligations.append(Obligation(address, premise, problem))

    # --- 栈 -------------------------------------------------------------------

    def stack(self, delta: Delta, q: Stack, level: str) -> Optional[str]:
        """st-bot / st-stm / st-del / st-ret / st-res"""
        lat = self.world.lattice
        ctx = TypeContext(self.world.tenv, delta)
        for i, sym in enumerate(q):
            if isinstance(sym, Del):
                if sym.name not in ctx.delta:
                    return f"st-del: 变量 {sym.name} 不在 Δ 中（栈位置 {i}）"
                ctx = ctx.with_delta(ctx.delta.remove(sym.name))
            elif isinstance(sym, Ret):
                if sym.delta is None:
                    return f"st-ret: 返回符号缺少 Δ（栈位置 {i}）"
                ctx = ctx.with_delta(sym.delta)
                report = typecheck_vars(ctx, sym.vars.plain())
                if not report:
                    return f"st-ret: {report.reason}（栈位置 {i}）"
            elif isinstance(sym, Lvl):
                if not lat.leq(sym.level, level):
                    return f"st-res: {level} ⋣ {sym.level}（栈位置 {i}）"
                level = sym.level
            else:
                problem = self.stm(ctx, sym, level)
                if problem:
                    return f"{problem}（栈位置 {i}）"
        return None


def sem_typecheck(world: SemanticWorld, delta: Delta, target: Union[Stm, Stack], level: str,
                  known: Iterable[Triplet] = ()) -> SemResult:
    """
    Σ;Γ;Δ;env_T ⊨ S : cmd_s（或栈 Q）

    st-fcall 的 fallback 前提先尝试由规则递归导出，再查 known 中的已验证三元组；
    两者都不行时作为义务返回。
    """
    world.lattice.check(level)
    checker = _SemChecker(world, known)
    if isinstance(target, tuple):
        problem = checker.stack(delta, target, level)
    else:
        problem = checker.stm(TypeContext(world.tenv, delta), target, level)
    problems = [problem] if problem else []
    result = SemResult(not problems and not checker.obligations, problems, checker.obligations,
                       frozenset(checker.used))
    if not result:
        logger.debug("语义类型检查失败: %s", result.reason)
    return result


def sem_table(world: SemanticWorld, known: Iterable[Triplet] = (),
              addresses: Optional[Iterable[str]] = None) -> SemResult:
    """
    Σ;Γ;env_T ⊨ env_T：每个非 fallback 方法体在签名级别下语义安全，且 s ⊑ s1

    addresses 给出时只检查这些合约。
    """
    tenv = world.tenv
    checker = _SemChecker(world, known)
    problems: List[str] = []
    wanted = None if addresses is None else {str(a) for a in addresses}
    for address in sorted(world.table, key=str):
        if wanted is not None and address.name not in wanted:
            continue
        t = tenv.address_type(address)
        if t is None:
            problems.append(f"st-envm: 地址 {address} 不在 Γ 中")
            continue
        for name, (params, body) in world.table[address].items():
            if name == 'fallback':
                continue
            sig = tenv.member(t.base.name, name)
            if not isinstance(sig, ProcType) or len(sig.params) != len(params):
                problems.append(f"st-envm: {address}.{name} 与接口 {t.base} 的签名不符")
                continue
            if not tenv.lattice.leq(sig.level, t.level):
                problems.append(f"st-envm: {address}.{name} 的命令级别 {sig.level} ⋢ {t.level}")
                continue
            ctx = TypeContext(tenv, method_delta(tenv, address, params, sig))
            problem = checker.stm(ctx, body, sig.level)
            if problem:
                problems.append(f"{address}.{name}: {problem}")
    return SemResult(not problems and not checker.obligations, problems, checker.obligations,
                       frozenset(checker.used))


# =============================================================================
# 4. up-to union
# =============================================================================

@dataclass
class UpToResult:
    """核心集 ŘT 与基础义务（由语义规则导出的判断）"""
    status: str
    core: TripletSet = frozenset()
    obligations: TripletSet = frozenset()
    witness: List[str] = field(default_factory=list)
    reason: str = ''

    @property
    def ok(self) -> bool:
        return self.status == 'full'


def _is_call_head(t: Triplet) -> bool:
    return bool(t.stack) and isinstance(t.stack[0], (Call, DCall))


def build_upto(world: SemanticWorld, root: Triplet, budget: Optional[SearchBudget] = None,
               known: Iterable[Triplet] = ()) -> UpToResult:
    """
    构建 up-to union 证书：从 root 闭包，但调用步的后继若能由语义规则导出，
    就作为义务记录而不再展开
    """
    budget = budget or SearchBudget()
    known = frozenset(known)
    system = TransitionSystem(world, budget)
    parents: Dict[Triplet, Optional[Triplet]] = {root: None}
    obligations: Set[Triplet] = set()
    queue = deque([(root, 0)])
    while queue:
        t, depth = queue.popleft()
        if t in obligations:
            continue
        lifted = system.successors(t)
        if lifted.kind == 'terminal':
            continue
        if not lifted.safe:
            reason = lifted.reason or "没有类型提升转换"
            return UpToResult('untypable', frozenset(parents), frozenset(obligations),
                              _path(parents, t) + [reason], reason)
        for succ in _sorted(lifted.successors):
            if succ in parents:
                continue
            if depth + 1 > budget.max_depth or len(parents) >= budget.max_triplets:
                return UpToResult('unknown', frozenset(parents), frozenset(obligations), reason="超出预算")
            parents[succ] = t
            if _is_call_head(t) and sem_typecheck(world, succ.delta, succ.stack, succ.level, known):
                obligations.add(succ)
            queue.append((succ, depth + 1))
    logger.info("up-to union 核心集: %d 个三元组, %d 个义务", len(parents), len(obligations))
    return UpToResult('full', frozenset(parents), frozenset(obligations))


def verify_upto_union(world: SemanticWorld, core: Iterable[Triplet], obligations: Iterable[Triplet],
                      root: Optional[Triplet] = None, known: Iterable[Triplet] = ()) -> Verdict:
    """
    Ř ⤳ Ř ∪ Ř'：每个义务属于核心集且可由语义规则导出（于是存在包含它的类型解释 Ř'），
    核心集中其余成员的后继都在核心集中
    """
    core, obligations, known = frozenset(core), frozenset(obligations), frozenset(known)
    if root is not None and root not in core:
        return Verdict.fail("根三元组不在核心集中", root)
    if obligations:
        table_ok = sem_table(world, known)
        if not table_ok:
            return Verdict.fail(f"env_T 不满足语义类型: {table_ok.reason}")
    for ob in _sorted(obligations):
        if ob not in core:
            return Verdict.fail("义务不在核心集中", ob)
        result = sem_typecheck(world, ob.delta, ob.stack, ob.level, known)
        if not result:
            return Verdict.fail(f"义务无法由语义规则导出: {result.reason}", ob)
    verdict = check_progression(world, core, core, skip=obligations)
    logger.info("up-to union 验证 (%d 个三元组, %d 个义务): %s",
                len(core), len(obligations), 'PASS' if verdict else verdict.reason)
    return verdict


def materialize_upto_union(world: SemanticWorld, core: Iterable[Triplet], obligations: Iterable[Triplet],
                           budget: Optional[SearchBudget] = None) -> TripletSet:
    """
    把核心集与每个义务的类型解释合并为显式的完整类型解释

    Raises
    ------
    CertificateError
        某个义务无法在预算内构建出类型解释
    """
    system = TransitionSystem(world, budget)
    parts = [frozenset(core)]
    for ob in _sorted(obligations):
        built = build_interpretation(world, ob, budget, system)
        if not built.ok:
            raise CertificateError(f"义务 {ob} 无法展开: {built.status} {built.reason}")
        parts.append(built.triplets)
    return union_interpretations(*parts)
