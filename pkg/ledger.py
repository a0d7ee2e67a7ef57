"""
只追加账本：把合约代码与其语义类型证书绑定在一起

存储格式为 JSONL，每行一个条目，条目之间以 SHA-256 哈希链连接。
条目一旦写入就不再改动；追加被拒绝时文件保持原样。
"""

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import pandas as pd
from pydantic import BaseModel, ValidationError

from certificates import Certificate, certificate_triplets, program_sha256, verify_certificate
from errors import CertificateError, LedgerError, TinySolError
from semantic_typing import SemanticWorld, sem_table
from tinysol_syntax import Program, parse_program, pretty_contract

logger = logging.getLogger(__name__)

GENESIS = '0' * 64


class LedgerEntry(BaseModel):
    index: int
    address: str
    interface: str
    level: str
    source: str
    interfaces: str = ''
    lattice: str = ''
    source_sha256: str
    certificate: Optional[Certificate] = None
    prev_hash: str
    entry_hash: str = ''

    @property
    def syntactic_only(self) -> bool:
        return self.certificate is None

    def compute_hash(self) -> str:
        body = self.model_dump_json(exclude={'entry_hash'})
        return hashlib.sha256(body.encode('utf-8')).hexdigest()

    def program(self, lattice_override: Optional[str] = None) -> Program:
        lattice = self.lattice if lattice_override is None else lattice_override
        return parse_program(self.source, self.interfaces, lattice)


@dataclass
class EntryStatus:
    index: int
    address: str = ''
    chain: str = 'PASS'
    certificate: str = 'none'
    detail: str = ''

    @property
    def ok(self) -> bool:
        return self.chain == 'PASS' and self.certificate != 'FAIL'


@dataclass
class LedgerReport:
    entries: List[EntryStatus] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)

    def __bool__(self) -> bool:
        return self.ok

    @property
    def first_failure(self) -> Optional[EntryStatus]:
        return next((e for e in self.entries if not e.ok), None)


class LedgerStore:
    """
    JSONL 账本文件

    单写者追加；读者看到的总是一个前缀一致的文件。
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    def init(self, force: bool = False) -> None:
        if self.path.exists() and self.path.stat().st_size > 0 and not force:
            raise LedgerError(f"账本 {self.path} 已存在且非空")
        self.path.write_text('', encoding='utf-8')
        logger.info("初始化账本 %s", self.path)

    def _raw_lines(self) -> List[bytes]:
        if not self.path.exists():
            raise LedgerError(f"账本 {self.path} 不存在")
        data = self.path.read_bytes()
        return data.split(b'\n') if data else []

    def _parse(self, index: int, raw: bytes, last: bool = False) -> LedgerEntry:
        if last:
            raise LedgerError("末尾缺少换行（可能写入不完整）", index)
        try:
            line = raw.decode('utf-8')
            entry = LedgerEntry.model_validate_json(line)
        except UnicodeDecodeError as err:
            raise LedgerError(f"不是合法的 UTF-8: {err.reason}", index) from err
        except ValidationError as err:
            raise LedgerError(f"条目格式错误: {err.errors()[0]['msg']}", index) from err
        if entry.model_dump_json() != line:
            raise LedgerError("条目编码不规范", index)
        return entry

    def _lines(self) -> List[Tuple[int, bytes, bool]]:
        """(序号, 原始字节, 是否为缺少换行的残行)"""
        raw = self._raw_lines()
        if raw and raw[-1] == b'':
            return [(i, line, False) for i, line in enumerate(raw[:-1])]
        return [(i, line, i == len(raw) - 1) for i, line in enumerate(raw)]

    def _check_chain(self, entries: List[LedgerEntry]) -> None:
        prev = GENESIS
        for i, entry in enumerate(entries):
            self._check_chain_link(i, entry, prev)
            prev = entry.entry_hash

    def entries(self) -> List[LedgerEntry]:
        """
        读取并校验整个哈希链

        Raises
        ------
        LedgerError
            文件损坏或哈希链断裂
        """
        entries = [self._parse(i, raw, last) for i, raw, last in self._lines()]
        self._check_chain(entries)
        return entries

    def latest(self, address: str) -> Optional[LedgerEntry]:
        found = [e for e in self.entries() if e.address == address]
        return found[-1] if found else None

    def append(self, source: str, interfaces: str = '', lattice: str = '',
               address: Optional[str] = None, certificate: Optional[Certificate] = None) -> LedgerEntry:
        """
        解析合约、验证证书（若有）后追加条目

        Raises
        ------
        ParseError / ProgramError
            源码无法解析
        CertificateError
            证书未通过验证
        LedgerError
            已有账本损坏
        """
        entries = self.entries()
        program = parse_program(source, interfaces, lattice)
        if address is None:
            if not program.contracts:
                raise LedgerError("源码中没有合约")
            address = program.contracts[-1].address
        contract = program.contract(address)
        if contract is None:
            raise LedgerError(f"源码中没有合约 {address}")
        if certificate is not None:
            verdict = verify_certificate(program, certificate)
            if not verdict:
                raise CertificateError(f"证书被拒绝: {verdict.reason}")
        entry = LedgerEntry(
            index=len(entries), address=address, interface=contract.interface, level=contract.level,
            source=source, interfaces=interfaces, lattice=lattice, source_sha256=program_sha256(program),
            certificate=certificate, prev_hash=entries[-1].entry_hash if entries else GENESIS,
        )
        entry.entry_hash = entry.compute_hash()
        with open(self.path, 'a', encoding='utf-8') as fh:
            fh.write(entry.model_dump_json() + '\n')
        logger.info("账本追加条目 %d: %s (%s)", entry.index, address,
                    'syntactic-only' if entry.syntactic_only else 'certified')
        return entry

    def verify(self, lattice_override: Optional[str] = None) -> LedgerReport:
        """逐条校验哈希链并重新验证证书；不做任何修复"""
        report = LedgerReport()
        try:
            lines = self._lines()
        except LedgerError as err:
            report.entries.append(EntryStatus(0, chain='FAIL', detail=str(err)))
            return report
        prev = GENESIS
        chain_broken = False
        for i, raw, last in lines:
            status = EntryStatus(i)
            report.entries.append(status)
            if chain_broken:
                status.chain, status.detail = 'FAIL', "前面的条目已损坏"
                continue
            try:
                entry = self._parse(i, raw, last)
                self._check_chain_link(i, entry, prev)
            except LedgerError as err:
                status.chain, status.detail = 'FAIL', str(err)
                chain_broken = True
                continue
            prev = entry.entry_hash
            status.address = entry.address
            if entry.certificate is not None:
                status.certificate, status.detail = _recheck(entry, lattice_override)
        logger.info("账本校验 %s: %s", self.path, 'PASS' if report else 'FAIL')
        return report

    @staticmethod
    def _check_chain_link(i: int, entry: LedgerEntry, prev: str) -> None:
        if entry.index != i:
            raise LedgerError(f"序号应为 {i}，实际为 {entry.index}", i)
        if entry.prev_hash != prev:
            raise LedgerError("prev_hash 与上一条目不符", i)
        if entry.compute_hash() != entry.entry_hash:
            raise LedgerError("条目哈希不符", i)


def _recheck(entry: LedgerEntry, lattice_override: Optional[str] = None):
    try:
        program = entry.program(lattice_override)
    except TinySolError as err:
        return 'FAIL', f"无法重新解析: {err}"
    verdict = verify_certificate(program, entry.certificate)
    if verdict:
        return 'PASS', ''
    return 'FAIL', verdict.reason


# =============================================================================
# 客户端检查
# =============================================================================

@dataclass
class ClientCheck:
    ok: bool
    problems: List[str] = field(default_factory=list)
    certificates_used: List[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def _ledger_knowledge(store: LedgerStore, program: Program, problems: List[str]) -> Dict[str, frozenset]:
    """客户端程序中与账本条目一致的合约 → 其证书核心集（读时重新验证）"""
    known: Dict[str, frozenset] = {}
    for contract in program.contracts:
        entry = store.latest(contract.address)
        if entry is None or entry.certificate is None:
            continue
        try:
            ledger_program = entry.program()
        except TinySolError as err:
            problems.append(f"{contract.address}: 账本条目无法解析: {err}")
            continue
        ledger_contract = ledger_program.contract(contract.address)
        if pretty_contract(ledger_contract) != pretty_contract(contract):
            problems.append(f"{contract.address}: 客户端声明与账本代码不一致，证书不可用")
            continue
        verdict = verify_certificate(ledger_program, entry.certificate)
        if not verdict:
            problems.append(f"{contract.address}: 账本证书验证失败: {verdict.reason}")
            continue
        known[contract.address] = certificate_triplets(entry.certificate, ledger_program)
    return known


def client_typecheck_against_ledger(store: LedgerStore, program: Program,
                                    clients: Optional[Iterable[str]] = None) -> ClientCheck:
    """
    用语义类型规则检查客户端合约；对账本上合约的 st-fcall 前提由其证书满足

    clients 缺省为程序中不在账本上的合约。
    """
    on_ledger = {e.address for e in store.entries()}
    if clients is None:
        clients = [c.address for c in program.contracts if c.address not in on_ledger]
    clients = list(clients)
    problems: List[str] = []
    known_by_address = _ledger_knowledge(store, program, problems)
    known: set = set()
    for triplets in known_by_address.values():
        known |= triplets

    world = SemanticWorld.of(program)
    result = sem_table(world, frozenset(known), clients)
    problems.extend(result.problems)
    problems.extend(str(o) for o in result.obligations)
    used = sorted(address for address, triplets in known_by_address.items() if triplets & result.used)
    ok = not result.problems and not result.obligations
    logger.info("客户端检查 %s: %s", clients, 'PASS' if ok else '; '.join(problems))
    return ClientCheck(ok, problems if not ok else [], used)


def ledger_report(store: LedgerStore, report: Optional[LedgerReport] = None) -> pd.DataFrame:
    """账本内容与校验状态，每个条目一行"""
    report = report or store.verify()
    status = {e.index: e for e in report.entries}
    rows = []
    try:
        entries = store.entries()
    except LedgerError:
        entries = []
    for entry in entries:
        s = status.get(entry.index)
        rows.append({
            'index': entry.index,
            'address': entry.address,
            'type': f"{entry.interface}@{entry.level}",
            'certified': not entry.syntactic_only,
            'chain': s.chain if s else '',
            'certificate': s.certificate if s else '',
            'hash': entry.entry_hash[:12],
        })
    if not entries:
        rows = [{'index': s.index, 'address': s.address, 'chain': s.chain,
                 'certificate': s.certificate, 'detail': s.detail} for s in report.entries]
    return pd.DataFrame(rows)
