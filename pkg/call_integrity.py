"""
调用完整性：s-合约判定、带标签的类型化语义变体，以及差分测试框架

可信合约 X 的调用完整性：无论不可信合约的代码与字段如何变化，
只要两次执行都终止，X 发出的调用序列都相同。
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from config import CIConfig
from lattice_types import Addr, ProcType, TypeEnv, Value, VarType
from runtime import (
    Configuration, MethodTable, State, Trace, compile_transaction, elaborate_declarations,
    project_trace, run_untyped,
)
from static_checks import TypeContext
from tinysol_syntax import AssignField, Call, Lit, Program, Skip, Stm, VarEnv, seq
from typed_semantics import (
    TypedConfiguration, TypedRunResult, candidate_values, run_typed, step_typed_labelled,
)

logger = logging.getLogger(__name__)

Transaction = List[Tuple[Addr, Call]]


# =============================================================================
# 1. 信任划分与 s-合约
# =============================================================================

@dataclass(frozen=True)
class TrustPartition:
    trusted: frozenset
    untrusted: frozenset

    @classmethod
    def of(cls, program: Program, trusted: Iterable[str]) -> 'TrustPartition':
        trusted = frozenset(Addr(a) for a in trusted)
        everything = frozenset(Addr(a) for a in program.addresses)
        unknown = trusted - everything
        if unknown:
            raise ValueError(f"未知的可信地址: {sorted(str(a) for a in unknown)}")
        return cls(trusted, everything - trusted)

    @classmethod
    def by_level(cls, program: Program, level: str) -> Optional['TrustPartition']:
        """可信 = level-合约，其余必须都是 top-合约；否则划分不适用"""
        tenv = program.tenv
        top = tenv.lattice.top
        trusted, untrusted = set(), set()
        for a in sorted(program.addresses):
            if is_s_contract(tenv, a, level):
                trusted.add(Addr(a))
            elif is_s_contract(tenv, a, top):
                untrusted.add(Addr(a))
            else:
                return None
        return cls(frozenset(trusted), frozenset(untrusted))


def is_s_contract(tenv: TypeEnv, address: str, level: str) -> bool:
    """Γ(X) = I_s，I 的每个字段为 ⌈B_s⌉、每个方法为 cmd_s（balance/send/fallback 除外）"""
    t = tenv.address_type(address)
    if t is None or t.level != level:
        return False
    for name, member in tenv.interface_members(t.base.name).items():
        if name in ('send', 'fallback'):
            continue
        if isinstance(member, VarType) and member.level != level:
            return False
        if isinstance(member, ProcType) and member.level != level:
            return False
    return True


# =============================================================================
# 2. 带标签的类型化语义（余额条件无条件生效）
# =============================================================================

def step_typed_ci(tc: TypedConfiguration):
    """同 step_typed_labelled，但 r-call/r-fcall 的 s' ⊑ s3, s4 不再以 z ≠ 0 为前提"""
    return step_typed_labelled(tc, strict_transfer=True)


def typed_transaction(program: Program, tx: Transaction, state: Optional[State] = None,
                      level: Optional[str] = None) -> TypedConfiguration:
    table, initial = elaborate_declarations(program)
    tenv = program.tenv
    config = Configuration(compile_transaction(tx, tenv), table, state or initial, VarEnv())
    return TypedConfiguration(TypeContext(tenv), level or tenv.lattice.bottom, config)


def run_typed_ci(tc: TypedConfiguration, max_steps: int = 5000) -> TypedRunResult:
    return run_typed(tc, max_steps, strict_transfer=True)


# =============================================================================
# 3. 差分测试
# =============================================================================

@dataclass
class Divergence:
    variant: int
    address: str
    position: int
    expected: str
    actual: str

    def __str__(self) -> str:
        return (f"变体 {self.variant}: {self.address} 的第 {self.position} 个调用 "
                f"期望 {self.expected}，实际 {self.actual}")


@dataclass
class CIReport:
    """判定结果：divergence 为 None 即 PASS；inconclusive 为未能双方终止的变体数"""
    trusted: List[str]
    variants: int = 0
    compared: int = 0
    inconclusive: int = 0
    divergence: Optional[Divergence] = None
    rows: List[Dict[str, object]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.divergence is None

    def __bool__(self) -> bool:
        return self.ok

    def summary(self) -> str:
        verdict = 'PASS' if self.ok else f"FAIL ({self.divergence})"
        return (f"{verdict}: {self.variants} 个变体，{self.compared} 个可比较，"
                f"{self.inconclusive} 个不确定（未终止）")


def _literal(tenv: TypeEnv, t: VarType, rng: np.random.Generator) -> Optional[Value]:
    choices = candidate_values(tenv, t)
    if not choices:
        return None
    return choices[int(rng.integers(len(choices)))]


def random_body(program: Program, address: Addr, targets: Iterable[Addr], rng: np.random.Generator,
                max_len: int) -> Stm:
    """
    由小文法随机生成方法体：skip、给自身字段赋字面量、以字面量实参调用 targets 上已声明的方法（金额 0）
    """
    tenv = program.tenv
    iface = tenv.address_type(address).base.name
    fields = [(f, t) for f, t in sorted(tenv.fields_of(iface).items()) if f != 'balance']
    callees = []
    for a in sorted(targets, key=str):
        decl = tenv.address_type(a).base.name
        for m, sig in sorted(tenv.methods_of(decl).items()):
            if m not in ('fallback', 'send'):
                callees.append((a, m, sig))
    stms: List[Stm] = []
    for _ in range(int(rng.integers(1, max_len + 1))):
        kind = int(rng.integers(3))
        if kind == 1 and fields:
            f, t = fields[int(rng.integers(len(fields)))]
            v = _literal(tenv, t, rng)
            if v is not None:
                stms.append(AssignField(f, Lit(v)))
                continue
        if kind == 2 and callees:
            target, m, sig = callees[int(rng.integers(len(callees)))]
            args = [_literal(tenv, p, rng) for p in sig.params]
            if all(a is not None for a in args):
                stms.append(Call(Lit(target), m, tuple(Lit(a) for a in args), Lit(0)))
                continue
        stms.append(Skip())
    return seq(*stms)


def mutate(program: Program, partition: TrustPartition, table: MethodTable, state: State,
           rng: np.random.Generator, max_body_len: int) -> Tuple[MethodTable, State]:
    """只改动不可信合约：替换方法体（参数名不变），扰动字段取值"""
    tenv = program.tenv
    table = dict(table)
    state = {a: dict(fields) for a, fields in state.items()}
    for address in sorted(partition.untrusted, key=str):
        methods = {}
        for name, (params, body) in table[address].items():
            if name == 'send' or rng.random() < 0.5:
                methods[name] = (params, body)
            else:
                methods[name] = (params, random_body(program, address, partition.untrusted, rng, max_body_len))
        table[address] = methods
        iface = tenv.address_type(address).base.name
        for f, t in tenv.fields_of(iface).items():
            if f == 'balance' or rng.random() < 0.5:
                continue
            v = _literal(tenv, t, rng)
            if v is not None:
                state[address][f] = v
    return table, state


def _first_divergence(variant: int, trusted: Iterable[Addr], base: Trace, other: Trace) -> Optional[Divergence]:
    for address in sorted(trusted, key=str):
        p1, p2 = project_trace(base, address), project_trace(other, address)
        if p1 == p2:
            continue
        pos = next((i for i, (a, b) in enumerate(zip(p1, p2)) if a != b), min(len(p1), len(p2)))
        expected = str(p1[pos]) if pos < len(p1) else 'ε'
        actual = str(p2[pos]) if pos < len(p2) else 'ε'
        return Divergence(variant, str(address), pos, expected, actual)
    return None


def check_call_integrity(program: Program, partition: TrustPartition, tx: Transaction,
                         config: Optional[CIConfig] = None) -> CIReport:
    """
    对不可信合约做 config.mutations 次变异，与原程序比较每个可信合约的投影调用序列

    只有双方都到达 ⊥ 的变体参与比较；其余计为不确定。报告第一个分歧。
    """
    config = config or CIConfig()
    rng = config.rng()
    table, state = elaborate_declarations(program)
    stack = compile_transaction(tx)
    report = CIReport(trusted=sorted(str(a) for a in partition.trusted))

    base = run_untyped(Configuration(stack, table, state, VarEnv()), config.max_steps)
    for variant in range(1, config.mutations + 1):
        vtable, vstate = mutate(program, partition, table, state, rng, config.max_body_len)
        other = run_untyped(Configuration(stack, vtable, vstate, VarEnv()), config.max_steps)
        report.variants += 1
        row = {'variant': variant, 'status': other.status, 'steps': other.steps, 'diverged': False}
        if base.status != 'terminated' or other.status != 'terminated':
            report.inconclusive += 1
            report.rows.append(row)
            continue
        report.compared += 1
        divergence = _first_divergence(variant, partition.trusted, base.trace, other.trace)
        row['diverged'] = divergence is not None
        report.rows.append(row)
        if divergence:
            report.divergence = divergence
            logger.info("调用完整性分歧: %s", divergence)
            break
    logger.info("调用完整性检查: %s", report.summary())
    return report


# =============================================================================
# 4. 定理检查（同一 Q 与 Γ，两个仅在不可信条目上不同的状态）
# =============================================================================

@dataclass
class TheoremCIResult:
    """status ∈ {pass, fail, inapplicable}"""
    status: str
    detail: str = ''
    traces: Tuple[List[str], List[str]] = ((), ())
    compared: bool = False      # 双方都终止并比较了投影调用序列

    @property
    def ok(self) -> bool:
        return self.status != 'fail'


def perturb_untrusted(program: Program, partition: TrustPartition, state: State,
                      rng: np.random.Generator) -> State:
    tenv = program.tenv
    state = {a: dict(fields) for a, fields in state.items()}
    for address in sorted(partition.untrusted, key=str):
        iface = tenv.address_type(address).base.name
        for f, t in sorted(tenv.fields_of(iface).items()):
            v = _literal(tenv, t, rng) if f != 'balance' else int(rng.integers(0, 3))
            if v is not None:
                state[address][f] = v
    return state


def theorem_ci_check(program: Program, tx: Transaction, seed: int = 0, max_steps: int = 5000) -> TheoremCIResult:
    """
    可信 = 格底合约、不可信 = 格顶合约；在两个 L-相等的状态上执行带标签的类型化语义，
    双方都终止时比较每个可信地址的投影调用序列
    """
    lat = program.lattice
    if len(lat.levels) != 2:
        return TheoremCIResult('inapplicable', "需要两点格")
    partition = TrustPartition.by_level(program, lat.bottom)
    if partition is None or not partition.trusted:
        return TheoremCIResult('inapplicable', "合约不能划分为 L-合约与 H-合约")
    rng = np.random.default_rng(seed)
    _, state = elaborate_declarations(program)
    other_state = perturb_untrusted(program, partition, state, rng)
    r1 = run_typed_ci(typed_transaction(program, tx, state), max_steps)
    r2 = run_typed_ci(typed_transaction(program, tx, other_state), max_steps)
    traces = ([str(x) for x in r1.trace], [str(x) for x in r2.trace])
    if r1.status != 'terminated' or r2.status != 'terminated':
        return TheoremCIResult('pass', f"未同时终止: {r1.status}/{r2.status}", traces)
    divergence = _first_divergence(0, partition.trusted, r1.trace, r2.trace)
    if divergence:
        logger.warning("类型化调用完整性被违反: %s", divergence)
        return TheoremCIResult('fail', str(divergence), traces, compared=True)
    return TheoremCIResult('pass', '', traces, compared=True)


def ci_report(reports: Dict[str, CIReport]) -> pd.DataFrame:
    """每个程序/交易一行的汇总表"""
    rows = []
    for name, r in reports.items():
        rows.append({
            'name': name,
            'trusted': ','.join(r.trusted),
            'variants': r.variants,
            'compared': r.compared,
            'inconclusive': r.inconclusive,
            'result': 'PASS' if r.ok else 'FAIL',
            'divergence': str(r.divergence) if r.divergence else '',
        })
    return pd.DataFrame(rows)
