"""
语义类型证书：可持久化的类型解释（完整或 up-to union）

证书绑定到程序文本的 SHA-256；验证时先核对哈希，再重新检查进展条件。
"""

import hashlib
import logging
from pathlib import Path
from typing import FrozenSet, List, Optional, Union

from pydantic import BaseModel, Field

from config import SearchBudget
from errors import CertificateError, TinySolError
from semantic_typing import (
    SemanticWorld, Triplet, Verdict, build_interpretation, build_upto, fallback_root,
    verify_typing_interpretation, verify_upto_union,
)
from tinysol_syntax import Program, parse_delta_text, parse_stack_text, pretty_stack

logger = logging.getLogger(__name__)

CERT_KINDS = ('full', 'upto')


class TripletModel(BaseModel):
    stack: str
    delta: str = ''
    level: str


class Certificate(BaseModel):
    """kind='full' 时 core 本身是类型解释；kind='upto' 时 core ⤳ core ∪ Ř'，obligations 由语义规则导出"""
    kind: str = 'full'
    program_sha256: str
    root: TripletModel
    core: List[TripletModel] = Field(default_factory=list)
    obligations: List[TripletModel] = Field(default_factory=list)


# =============================================================================
# 编码
# =============================================================================

def program_sha256(program: Program) -> str:
    """对 (合约源码, 接口源码, 格源码) 取哈希"""
    h = hashlib.sha256()
    for part in program.sources:
        h.update(part.encode('utf-8'))
        h.update(b'\x00')
    return h.hexdigest()


def triplet_to_model(t: Triplet) -> TripletModel:
    return TripletModel(stack=pretty_stack(t.stack), delta=str(t.delta), level=t.level)


def triplet_from_model(m: TripletModel, program: Program) -> Triplet:
    """
    Raises
    ------
    CertificateError
        栈或 Δ 文本无法解析，或级别不在格中
    """
    try:
        program.lattice.check(m.level)
        return Triplet(parse_stack_text(m.stack, program), parse_delta_text(m.delta), m.level)
    except TinySolError as err:
        raise CertificateError(f"无法读回三元组 {m.stack!r}: {err}") from err


def _models(triplets) -> List[TripletModel]:
    return [triplet_to_model(t) for t in sorted(triplets, key=Triplet.key)]


def save_certificate(cert: Certificate, path: Union[str, Path]) -> None:
    Path(path).write_text(cert.model_dump_json(indent=2), encoding='utf-8')


def load_certificate(path: Union[str, Path]) -> Certificate:
    try:
        return Certificate.model_validate_json(Path(path).read_text(encoding='utf-8'))
    except ValueError as err:
        raise CertificateError(f"证书文件 {path} 格式错误: {err}") from err


# =============================================================================
# 生成与验证
# =============================================================================

def certify(program: Program, root: Triplet, kind: str = 'full',
            budget: Optional[SearchBudget] = None) -> Certificate:
    """
    为 root 构建证书

    Raises
    ------
    CertificateError
        root 不可类型化或超出预算
    """
    if kind not in CERT_KINDS:
        raise CertificateError(f"未知的证书类型 {kind}")
    world = SemanticWorld.of(program)
    if kind == 'full':
        built = build_interpretation(world, root, budget)
        core, obligations = built.triplets, frozenset()
    else:
        built = build_upto(world, root, budget)
        core, obligations = built.core, built.obligations
    if not built.ok:
        detail = ' ⇒ '.join(built.witness) if built.witness else built.reason
        raise CertificateError(f"无法为 {root} 生成证书 ({built.status}): {detail}")
    logger.info("生成 %s 证书: %d 个三元组, %d 个义务", kind, len(core), len(obligations))
    return Certificate(kind=kind, program_sha256=program_sha256(program), root=triplet_to_model(root),
                       core=_models(core), obligations=_models(obligations))


def certify_fallback(program: Program, address: str, level: Optional[str] = None,
                     kind: str = 'full', budget: Optional[SearchBudget] = None) -> Certificate:
    """为合约 fallback 体生成证书，供客户端 st-fcall 使用"""
    root = fallback_root(SemanticWorld.of(program), address, level)
    return certify(program, root, kind, budget)


def certificate_triplets(cert: Certificate, program: Program) -> FrozenSet[Triplet]:
    return frozenset(triplet_from_model(m, program) for m in cert.core)


def verify_certificate(program: Program, cert: Certificate) -> Verdict:
    """哈希一致、根在核心集中且进展条件成立"""
    if cert.program_sha256 != program_sha256(program):
        return Verdict.fail("证书哈希与程序不一致")
    if cert.kind not in CERT_KINDS:
        return Verdict.fail(f"未知的证书类型 {cert.kind}")
    try:
        root = triplet_from_model(cert.root, program)
        core = certificate_triplets(cert, program)
        obligations = frozenset(triplet_from_model(m, program) for m in cert.obligations)
    except CertificateError as err:
        return Verdict.fail(str(err))
    if root not in core:
        return Verdict.fail("根三元组不在核心集中", root)
    world = SemanticWorld.of(program)
    if cert.kind == 'full':
        if obligations:
            return Verdict.fail("完整证书不应包含义务")
        return verify_typing_interpretation(world, core)
    return verify_upto_union(world, core, obligations, root)
