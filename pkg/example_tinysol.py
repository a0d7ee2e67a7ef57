"""
TinySol 使用示例
依次演示 PMW 攻击、Proxy fallback 证书与账本、id 分派的 up-to union 压缩
"""

import tempfile
from pathlib import Path

from call_integrity import TrustPartition, check_call_integrity, typed_transaction
from certificates import certify_fallback, verify_certificate
from config import CIConfig
from corpus import CLIENT, COMBINED_PROXY, ID_DISPATCH, PMW, PROXY, PROXY_INTERFACES, PROXY_SOURCE, SINGLE_LEVEL
from ledger import LedgerStore, client_typecheck_against_ledger, ledger_report
from runtime import compile_transaction, initial_configuration, run_untyped
from semantic_typing import (
    SemanticWorld, build_interpretation, build_upto, fallback_root, materialize_upto_union,
    verify_upto_union,
)
from lattice_types import Addr
from typed_semantics import run_typed


# =============================================================================
# 示例 1: PMW 攻击
# =============================================================================

def example_1_pmw_attack():
    """委托调用 fallback 让攻击者改写 Proxy 的 owner"""
    print("=" * 60)
    print("示例 1: PMW 攻击")
    print("=" * 60)

    program = PMW.program()
    tx = PMW.transaction(0, program)

    # 非类型化执行：攻击成功
    result = run_untyped(initial_configuration(program, compile_transaction(tx)))
    state = result.config.state
    print(f"\n非类型化执行: {result.status}")
    for label in result.trace:
        print(f"  {label}")
    print(f"  Proxy.owner = {state[Addr('Proxy')]['owner']}")
    print(f"  Attacker.balance = {state[Addr('Attacker')]['balance']}")

    # 类型化执行：在 r-dcall 卡住
    typed = run_typed(typed_transaction(program, tx))
    print(f"\n类型化执行: {typed.status}")
    print(f"  原因: {typed.reason}")

    # fallback 体无法构建类型解释
    world = SemanticWorld.of(program)
    built = build_interpretation(world, fallback_root(world, 'Proxy'))
    print(f"\nProxy.fallback 解释构建: {built.status}")
    for step in built.witness:
        print(f"  ⇒ {step}")

    # 调用完整性：变异不可信的 X，可信的 Proxy 调用序列出现分歧
    report = check_call_integrity(program, TrustPartition.of(program, ['Proxy']), tx,
                                  CIConfig(mutations=20, seed=7))
    print(f"\n调用完整性 (可信: Proxy): {report.summary()}")
    return result, typed, report


# =============================================================================
# 示例 2: Proxy 证书与账本
# =============================================================================

def example_2_proxy_certificate():
    """为 Proxy 的 fallback 生成证书，发布到账本，客户端凭证书通过检查"""
    print("=" * 60)
    print("示例 2: Proxy 证书与账本")
    print("=" * 60)

    program = PROXY.program()
    cert = certify_fallback(program, 'Proxy')
    print(f"\n证书: {cert.kind}, {len(cert.core)} 个三元组")
    print(f"验证: {'PASS' if verify_certificate(program, cert) else 'FAIL'}")

    with tempfile.TemporaryDirectory() as tmp:
        store = LedgerStore(Path(tmp) / 'ledger.jsonl')
        store.init()
        store.append(PROXY_SOURCE, PROXY_INTERFACES, SINGLE_LEVEL, address='Proxy', certificate=cert)
        print("\n账本:")
        print(ledger_report(store).to_string(index=False))

        check = client_typecheck_against_ledger(store, CLIENT.program(), ['Client'])
        print(f"\n客户端检查: {'PASS' if check else 'FAIL'}")
        print(f"  使用的证书: {check.certificates_used}")
    return cert, check


# =============================================================================
# 示例 3: up-to union 压缩
# =============================================================================

def example_3_upto_union():
    """id 分派：核心集只包含分派逻辑，处理器由语义规则导出"""
    print("=" * 60)
    print("示例 3: up-to union 压缩")
    print("=" * 60)

    program = ID_DISPATCH.program()
    world = SemanticWorld.of(program)
    root = fallback_root(world, 'Y')

    full = build_interpretation(world, root)
    upto = build_upto(world, root)
    print(f"\n完整类型解释: {len(full.triplets)} 个三元组")
    print(f"up-to 核心集: {len(upto.core)} 个三元组, {len(upto.obligations)} 个义务")

    verdict = verify_upto_union(world, upto.core, upto.obligations, root)
    print(f"up-to 验证: {'PASS' if verdict else verdict.reason}")

    explicit = materialize_upto_union(world, upto.core, upto.obligations)
    print(f"展开后的显式解释: {len(explicit)} 个三元组")
    return full, upto


# =============================================================================
# 示例 4: 组合代理的调用完整性
# =============================================================================

def example_4_combined_proxy():
    """Proxy 与 X 可信、Ext 不可信：变异 Ext 不影响可信合约的调用序列"""
    print("=" * 60)
    print("示例 4: 组合代理的调用完整性")
    print("=" * 60)

    program = COMBINED_PROXY.program()
    partition = TrustPartition.by_level(program, 'L')
    print(f"\n可信: {sorted(map(str, partition.trusted))}, 不可信: {sorted(map(str, partition.untrusted))}")
    report = check_call_integrity(program, partition, COMBINED_PROXY.transaction(1, program))
    print(f"调用完整性: {report.summary()}")
    return report


# =============================================================================
# 主函数
# =============================================================================

def main():
    """运行所有示例"""
    print("\n")
    print("╔" + "═" * 58 + "╗")
    print("║" + " " * 16 + "TinySol 使用示例" + " " * 26 + "║")
    print("╚" + "═" * 58 + "╝")

    example_1_pmw_attack()
    example_2_proxy_certificate()
    example_3_upto_union()
    example_4_combined_proxy()

    print("\n" + "=" * 60)
    print("所有示例运行完成！")
    print("=" * 60)


if __name__ == "__main__":
    main()
