"""
安全格、类型语言与类型环境

- Lattice：有限安全格，由声明的覆盖关系经自反传递闭包得到（networkx）
- BaseType / VarType / ProcType / ArgsType：类型语言
- TypeEnv：Σ（接口继承树）+ Γ（接口成员与合约地址的类型）
- Delta：局部变量类型环境 Δ，不可变、按名字排序，可作为集合元素
- 子类型、成员子类型、Σ 一致性、Γ 良构性、TypeOf
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx

from errors import LatticeError

logger = logging.getLogger(__name__)


# =============================================================================
# 1. 判定结果
# =============================================================================

@dataclass
class Report:
    """判定结果：布尔值 + 诊断信息"""
    ok: bool
    problems: List[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok

    @classmethod
    def of(cls, problems: Sequence[str]) -> 'Report':
        return cls(not problems, list(problems))

    @property
    def reason(self) -> str:
        return "; ".join(self.problems)


# =============================================================================
# 2. 安全格
# =============================================================================

class Lattice:
    """
    有限安全格 (S, ⊑)

    Parameters
    ----------
    levels : Sequence[str]
        声明的级别名
    pairs : Iterable[Tuple[str, str]]
        覆盖关系 (l1, l2)，表示 l1 ⊑ l2
    top, bottom : str, optional
        省略时自动推断，且必须唯一
    """

    def __init__(self, levels: Sequence[str], pairs: Iterable[Tuple[str, str]] = (),
                 top: Optional[str] = None, bottom: Optional[str] = None):
        if not levels:
            raise LatticeError("安全格至少需要一个级别")
        if len(set(levels)) != len(levels):
            raise LatticeError(f"级别重复声明: {list(levels)}")

        graph = nx.DiGraph()
        graph.add_nodes_from(levels)
        for low, high in pairs:
            for name in (low, high):
                if name not in graph:
                    raise LatticeError(f"未声明的级别: {name}")
            graph.add_edge(low, high)

        closure = nx.transitive_closure(graph, reflexive=True)
        self._order = {(a, b) for a, b in closure.edges()}
        for a, b in self._order:
            if a != b and (b, a) in self._order:
                raise LatticeError(f"序关系不是反对称的: {a} 与 {b} 互相 ⊑")

        # 按“下方元素个数”再按名字排序，使枚举顺序确定且自底向上
        self.levels: Tuple[str, ...] = tuple(sorted(
            levels, key=lambda l: (sum(1 for m in levels if (m, l) in self._order), l)))

        self.top = self._extremum(top, upper=True)
        self.bottom = self._extremum(bottom, upper=False)

        self._join: Dict[Tuple[str, str], str] = {}
        self._meet: Dict[Tuple[str, str], str] = {}
        for a in self.levels:
            for b in self.levels:
                self._join[(a, b)] = self._bound(a, b, upper=True)
                self._meet[(a, b)] = self._bound(a, b, upper=False)

        logger.debug("安全格: levels=%s top=%s bottom=%s", self.levels, self.top, self.bottom)

    def _extremum(self, declared: Optional[str], upper: bool) -> str:
        candidates = [l for l in self.levels
                      if all(((m, l) if upper else (l, m)) in self._order for m in self.levels)]
        if declared is not None:
            self.check(declared)
            if declared not in candidates:
                raise LatticeError(f"{'top' if upper else 'bottom'} 声明为 {declared}，但它不是{'最大' if upper else '最小'}元")
            return declared
        if len(candidates) != 1:
            raise LatticeError(f"无法推断唯一的{'top' if upper else 'bottom'}")
        return candidates[0]

    def _bound(self, a: str, b: str, upper: bool) -> str:
        if upper:
            bounds = [c for c in self.levels if self.leq(a, c) and self.leq(b, c)]
            least = [c for c in bounds if all(self.leq(c, d) for d in bounds)]
        else:
            bounds = [c for c in self.levels if self.leq(c, a) and self.leq(c, b)]
            least = [c for c in bounds if all(self.leq(d, c) for d in bounds)]
        if len(least) != 1:
            raise LatticeError(f"{a} 与 {b} 没有唯一的{'上' if upper else '下'}确界，不是格")
        return least[0]

    def check(self, level: str) -> str:
        if level not in self.levels:
            raise LatticeError(f"未声明的级别: {level}")
        return level

    def leq(self, a: str, b: str) -> bool:
        self.check(a)
        self.check(b)
        return (a, b) in self._order

    def leq_all(self, a: str, bs: Iterable[str]) -> bool:
        """s ⊑ s1, ..., sh 的简写"""
        return all(self.leq(a, b) for b in bs)

    def join(self, a: str, b: str) -> str:
        self.check(a)
        self.check(b)
        return self._join[(a, b)]

    def meet(self, a: str, b: str) -> str:
        self.check(a)
        self.check(b)
        return self._meet[(a, b)]

    def join_all(self, levels: Iterable[str]) -> str:
        result = self.bottom
        for level in levels:
            result = self.join(result, level)
        return result

    def above(self, level: str) -> List[str]:
        """所有 ⊒ level 的级别，自底向上"""
        return [l for l in self.levels if self.leq(level, l)]

    def covering_pairs(self) -> List[Tuple[str, str]]:
        return sorted((a, b) for a, b in self._order if a != b)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Lattice) and set(self.levels) == set(other.levels)
                and self._order == other._order)

    def __hash__(self) -> int:
        return hash((frozenset(self.levels), frozenset(self._order)))

    def __repr__(self) -> str:
        return f"Lattice(levels={list(self.levels)}, top={self.top}, bottom={self.bottom})"


def default_lattice() -> Lattice:
    """默认二点格 {L, H}，L ⊑ H"""
    return Lattice(['L', 'H'], [('L', 'H')])


_LATTICE_RE = re.compile(r'^\s*lattice\s*\{(?P<body>.*)\}\s*$', re.S)


def parse_lattice(text: str) -> Lattice:
    """
    解析格文件：``lattice { levels: L, H; order: L <= H; top: H; bottom: L; }``

    空文本返回默认格。
    """
    text = re.sub(r'//[^\n]*', '', text or '')
    if not text.strip():
        return default_lattice()
    match = _LATTICE_RE.match(text)
    if not match:
        raise LatticeError("格文件必须形如 lattice { ... }")

    levels: List[str] = []
    pairs: List[Tuple[str, str]] = []
    top = bottom = None
    for clause in match.group('body').split(';'):
        if not clause.strip():
            continue
        if ':' not in clause:
            raise LatticeError(f"无法识别的格子句: {clause.strip()}")
        key, value = (part.strip() for part in clause.split(':', 1))
        if key == 'levels':
            levels = [v.strip() for v in value.split(',') if v.strip()]
        elif key == 'order':
            for item in value.split(','):
                if not item.strip():
                    continue
                if '<=' not in item:
                    raise LatticeError(f"序关系必须写作 a <= b: {item.strip()}")
                low, high = (p.strip() for p in item.split('<=', 1))
                pairs.append((low, high))
        elif key == 'top':
            top = value
        elif key == 'bottom':
            bottom = value
        else:
            raise LatticeError(f"未知的格字段: {key}")
    return Lattice(levels, pairs, top=top, bottom=bottom)


# =============================================================================
# 3. 值
# =============================================================================

@dataclass(frozen=True, order=True)
class Addr:
    """合约地址"""
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, order=True)
class MethodName:
    """方法名作为值（id 的取值）"""
    name: str

    def __str__(self) -> str:
        return self.name


Value = Union[bool, int, Addr, MethodName, Tuple]

# 保留的“缺席”方法名：规范构造中 idf 的默认值，永远不会被声明
ABSENT_METHOD = '__m0'


def value_kind(v: Value) -> str:
    """值的种类：bool 必须先于 int 判断"""
    if isinstance(v, bool):
        return 'bool'
    if isinstance(v, int):
        return 'int'
    if isinstance(v, Addr):
        return 'addr'
    if isinstance(v, MethodName):
        return 'idf'
    if isinstance(v, tuple):
        return 'args'
    return 'unknown'


def format_value(v: Value) -> str:
    if isinstance(v, bool):
        return 'true' if v else 'false'
    if isinstance(v, tuple):
        return '[' + ', '.join(format_value(x) for x in v) + ']'
    return str(v)


# =============================================================================
# 4. 类型语言
# =============================================================================

@dataclass(frozen=True, order=True)
class BaseType:
    """基类型 B ::= idf | int | bool | I"""
    kind: str                     # 'int' | 'bool' | 'idf' | 'iface'
    name: Optional[str] = None    # 接口名

    @property
    def is_interface(self) -> bool:
        return self.kind == 'iface'

    def __str__(self) -> str:
        return self.name if self.is_interface else self.kind


INT = BaseType('int')
BOOL = BaseType('bool')
IDF = BaseType('idf')


def iface(name: str) -> BaseType:
    return BaseType('iface', name)


def base_from_name(name: str) -> BaseType:
    return {'int': INT, 'bool': BOOL, 'idf': IDF}.get(name) or iface(name)


@dataclass(frozen=True, order=True)
class ExprType:
    """表达式类型 B_s"""
    base: BaseType
    level: str

    def __str__(self) -> str:
        return f"{self.base}@{self.level}"


@dataclass(frozen=True, order=True)
class VarType:
    """容器类型 ⌈B_s⌉：字段与变量"""
    base: BaseType
    level: str

    def __str__(self) -> str:
        return f"{self.base}@{self.level}"


@dataclass(frozen=True, order=True)
class ArgsType:
    """args 的类型 ⌈B̃_s̃⌉：逐元素保留"""
    items: Tuple[VarType, ...] = ()

    def __str__(self) -> str:
        return '[' + ', '.join(str(t) for t in self.items) + ']'


@dataclass(frozen=True, order=True)
class ProcType:
    """方法类型 (B̃_s̃) → cmd_s"""
    params: Tuple[VarType, ...]
    level: str

    def __str__(self) -> str:
        return '(' + ', '.join(str(p) for p in self.params) + f') -> cmd@{self.level}'


MemberType = Union[VarType, ProcType]
LocalType = Union[VarType, ArgsType]


# =============================================================================
# 5. 局部类型环境 Δ
# =============================================================================

@dataclass(frozen=True)
class Delta:
    """Δ：变量名 → 容器类型，条目按名字排序以便规范化与去重"""
    entries: Tuple[Tuple[str, LocalType], ...] = ()

    @classmethod
    def of(cls, mapping: Union[Dict[str, LocalType], Iterable[Tuple[str, LocalType]]] = ()) -> 'Delta':
        pairs = mapping.items() if isinstance(mapping, dict) else mapping
        return cls(tuple(sorted(dict(pairs).items())))

    def get(self, name: str) -> Optional[LocalType]:
        for key, t in self.entries:
            if key == name:
                return t
        return None

    def __contains__(self, name: str) -> bool:
        return any(key == name for key, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def bind(self, name: str, t: LocalType) -> 'Delta':
        return Delta.of([(k, v) for k, v in self.entries if k != name] + [(name, t)])

    def remove(self, name: str) -> 'Delta':
        return Delta(tuple((k, v) for k, v in self.entries if k != name))

    def names(self) -> List[str]:
        return [k for k, _ in self.entries]

    def items(self) -> List[Tuple[str, LocalType]]:
        return list(self.entries)

    def __str__(self) -> str:
        return ', '.join(f"{k} : {t}" for k, t in self.entries)


# =============================================================================
# 6. Σ + Γ
# =============================================================================

ITOP = 'Itop'
MAGIC_NAMES = ('this', 'sender', 'value', 'id', 'args')


@dataclass
class InterfaceDecl:
    """接口声明：名字、父接口、完整的成员表（成员不会自动继承）"""
    name: str
    parent: str
    members: Dict[str, MemberType] = field(default_factory=dict)


def itop_decl(lattice: Lattice) -> InterfaceDecl:
    return InterfaceDecl(ITOP, ITOP, {
        'balance': VarType(INT, lattice.top),
        'send': ProcType((), lattice.bottom),
        'fallback': ProcType((), lattice.bottom),
    })


class TypeEnv:
    """
    全局类型环境 Σ; Γ

    Parameters
    ----------
    lattice : Lattice
    interfaces : Dict[str, InterfaceDecl]
        用户声明的接口；Itop 自动加入且不可覆盖
    addresses : Dict[str, ExprType]
        合约地址 → I_s
    """

    def __init__(self, lattice: Lattice, interfaces: Optional[Dict[str, InterfaceDecl]] = None,
                 addresses: Optional[Dict[str, ExprType]] = None):
        self.lattice = lattice
        self.interfaces: Dict[str, InterfaceDecl] = {ITOP: itop_decl(lattice)}
        for name, decl in (interfaces or {}).items():
            if name != ITOP:
                self.interfaces[name] = decl
        self.addresses: Dict[str, ExprType] = dict(addresses or {})
        self._graph = nx.DiGraph()
        self._graph.add_nodes_from(self.interfaces)
        for decl in self.interfaces.values():
            if decl.name != decl.parent:
                self._graph.add_edge(decl.name, decl.parent)

    # --- Σ ------------------------------------------------------------------

    @property
    def sigma(self) -> Dict[str, str]:
        return {name: decl.parent for name, decl in self.interfaces.items()}

    def ancestors(self, name: str) -> List[str]:
        """从 name 沿父链到 Itop（含两端）；遇环即停"""
        chain: List[str] = []
        current = name
        while current in self.interfaces and current not in chain:
            chain.append(current)
            current = self.interfaces[current].parent
        return chain

    def is_subtype(self, b1: BaseType, b2: BaseType) -> bool:
        """Σ ⊢ B1 <: B2，由 sub-refl / sub-trans / sub-name 导出"""
        if b1 == b2:
            return True
        if not (b1.is_interface and b2.is_interface):
            return False
        if b1.name not in self._graph or b2.name not in self._graph:
            logger.debug("子类型判定遇到未知接口: %s <: %s", b1, b2)
            return False
        return nx.has_path(self._graph, b1.name, b2.name)

    def member_subtype(self, t1: MemberType, t2: MemberType) -> bool:
        """sub-field 协变；sub-proc 对参数与命令级别逆变"""
        lat = self.lattice
        if isinstance(t1, VarType) and isinstance(t2, VarType):
            return self.is_subtype(t1.base, t2.base) and lat.leq(t1.level, t2.level)
        if isinstance(t1, ProcType) and isinstance(t2, ProcType):
            if len(t1.params) != len(t2.params):
                return False
            for p1, p2 in zip(t1.params, t2.params):
                if not (self.is_subtype(p2.base, p1.base) and lat.leq(p2.level, p1.level)):
                    return False
            return lat.leq(t2.level, t1.level)
        return False

    # --- Γ ------------------------------------------------------------------

    def interface_members(self, name: str) -> Dict[str, MemberType]:
        decl = self.interfaces.get(name)
        return dict(decl.members) if decl else {}

    def member(self, name: str, member: str) -> Optional[MemberType]:
        decl = self.interfaces.get(name)
        return decl.members.get(member) if decl else None

    def fields_of(self, name: str) -> Dict[str, VarType]:
        """Γ_I 限制在字段名上"""
        return {k: t for k, t in self.interface_members(name).items() if isinstance(t, VarType)}

    def methods_of(self, name: str) -> Dict[str, ProcType]:
        """Γ_I 限制在方法名上"""
        return {k: t for k, t in self.interface_members(name).items() if isinstance(t, ProcType)}

    def address_type(self, address: Union[str, Addr]) -> Optional[ExprType]:
        key = address.name if isinstance(address, Addr) else address
        return self.addresses.get(key)

    def type_of(self, v: Value) -> Optional[ExprType]:
        """TypeOf：int/bool/方法名取格底，地址查 Γ；未知地址返回 None"""
        bottom = self.lattice.bottom
        kind = value_kind(v)
        if kind == 'bool':
            return ExprType(BOOL, bottom)
        if kind == 'int':
            return ExprType(INT, bottom)
        if kind == 'idf':
            return ExprType(IDF, bottom)
        if kind == 'addr':
            return self.address_type(v)
        return None

    def admissible_addresses(self, base: BaseType, level: str) -> List[Addr]:
        """所有类型为 I'_s' 且 I' <: base、s' ⊑ level 的已声明地址"""
        result = []
        for name in sorted(self.addresses):
            t = self.addresses[name]
            if self.is_subtype(t.base, base) and self.lattice.leq(t.level, level):
                result.append(Addr(name))
        return result

    def method_names(self) -> List[str]:
        names = set()
        for decl in self.interfaces.values():
            names.update(self.methods_of(decl.name))
        return sorted(names)


# =============================================================================
# 7. Σ 一致性与 Γ 良构性
# =============================================================================

def check_sigma_consistency(tenv: TypeEnv) -> Report:
    """
    Σ; Γ ⊢ Σ：反复修剪叶子（Σ-rec），最后只剩 (Itop, Itop)（Σ-top）

    等价检查：Itop 以自身为父；其余接口父接口已声明且不等于自身；
    继承关系无环；每条边上父接口成员都在子接口中以成员子类型重新声明。
    """
    problems: List[str] = []
    sigma = tenv.sigma
    if sigma.get(ITOP) != ITOP:
        problems.append("Itop 必须以自身为父接口")

    graph = nx.DiGraph()
    for child, parent in sigma.items():
        if child == ITOP:
            continue
        if child == parent:
            problems.append(f"接口 {child} 不能继承自身")
            continue
        if parent not in sigma:
            problems.append(f"接口 {child} 的父接口 {parent} 未声明")
            continue
        graph.add_edge(child, parent)

    if not nx.is_directed_acyclic_graph(graph):
        cycle = nx.find_cycle(graph)
        problems.append("继承关系存在环: " + " -> ".join(a for a, _ in cycle))
        return Report.of(problems)

    # 修剪顺序：叶子先于父亲
    for child in nx.topological_sort(graph):
        if child == ITOP or child not in sigma:
            continue
        parent = sigma[child]
        if parent not in tenv.interfaces or parent == child:
            continue
        sub = tenv.interface_members(child)
        sup = tenv.interface_members(parent)
        for name, t_parent in sup.items():
            if name not in sub:
                problems.append(f"({child}, {parent}): 子接口缺少成员 {name}")
            elif not tenv.member_subtype(sub[name], t_parent):
                problems.append(f"({child}, {parent}): 成员 {name} 的类型 {sub[name]} 不是 {t_parent} 的子类型")
    return Report.of(problems)


def _check_type_names(tenv: TypeEnv, t, where: str, problems: List[str]) -> None:
    lat = tenv.lattice
    items = t.params if isinstance(t, ProcType) else (t,)
    for item in items:
        if item.base.is_interface and item.base.name not in tenv.interfaces:
            problems.append(f"{where}: 未声明的接口 {item.base.name}")
        if item.level not in lat.levels:
            problems.append(f"{where}: 未声明的级别 {item.level}")
    if isinstance(t, ProcType) and t.level not in lat.levels:
        problems.append(f"{where}: 未声明的级别 {t.level}")


def check_gamma_wellformed(tenv: TypeEnv) -> Report:
    """Γ 良构：地址的接口可解析；接口成员表包含 balance/send/fallback 且引用的名字都已声明"""
    problems: List[str] = []
    lat = tenv.lattice
    for address, t in sorted(tenv.addresses.items()):
        if address in tenv.interfaces:
            problems.append(f"地址 {address} 与接口同名")
        if address in MAGIC_NAMES:
            problems.append(f"地址不能使用保留名 {address}")
        if not t.base.is_interface or t.base.name not in tenv.interfaces:
            problems.append(f"地址 {address} 的类型 {t} 不是已声明的接口")
        if t.level not in lat.levels:
            problems.append(f"地址 {address}: 未声明的级别 {t.level}")

    for name, decl in sorted(tenv.interfaces.items()):
        members = decl.members
        balance = members.get('balance')
        if not (isinstance(balance, VarType) and balance.base == INT):
            problems.append(f"接口 {name} 缺少 balance : int@s")
        send = members.get('send')
        if not (isinstance(send, ProcType) and not send.params):
            problems.append(f"接口 {name} 缺少 send : () -> cmd@s")
        elif send.level != lat.bottom:
            problems.append(f"接口 {name} 的 send 必须为 () -> cmd@{lat.bottom}")
        fallback = members.get('fallback')
        if not (isinstance(fallback, ProcType) and not fallback.params):
            problems.append(f"接口 {name} 缺少 fallback : () -> cmd@s")
        for member, t in members.items():
            if member in MAGIC_NAMES:
                problems.append(f"接口 {name} 的成员不能使用保留名 {member}")
            _check_type_names(tenv, t, f"{name}.{member}", problems)
    return Report.of(problems)
