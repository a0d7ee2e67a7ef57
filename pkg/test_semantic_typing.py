"""
测试脚本 - 语义类型：类型解释的构建、验证与 up-to union 压缩
"""

from corpus import CORPUS, ID_DISPATCH, KEEPER, PMW, PROXY
from errors import CertificateError
from lattice_types import Addr
from semantic_typing import (
    SemanticWorld, Triplet, build_interpretation, build_upto, fallback_root, lower_interpretation,
    materialize_upto_union, sem_table, stm_triplet, verify_typing_interpretation, verify_upto_union,
)
from static_checks import method_delta


def test_pmw_fallback_untypable():
    """测试 PMW 的委托 fallback 没有类型解释，见证路径很短"""
    print("测试 1: PMW fallback...")

    world = SemanticWorld.of(PMW.program())
    built = build_interpretation(world, fallback_root(world, 'Proxy'))
    assert built.status == 'untypable', f"应不可类型化，实际 {built.status}"
    assert 2 <= len(built.witness) <= 3, f"见证路径（含原因）应不超过 3 项: {built.witness}"

    for step in built.witness:
        print(f"  ⇒ {step}")
    print("  [OK] 测试通过\n")


def test_proxy_fallback_interpretation():
    """测试 Proxy 的转发 fallback 有一个小的完整类型解释"""
    print("测试 2: Proxy fallback...")

    world = SemanticWorld.of(PROXY.program())
    root = fallback_root(world, 'Proxy')
    built = build_interpretation(world, root)
    assert built.ok, f"应构建成功: {built.status} {built.reason}"
    assert root in built.triplets, "根三元组在解释中"
    assert len(built.triplets) <= 200, f"解释应不超过 200 个三元组，实际 {len(built.triplets)}"
    assert verify_typing_interpretation(world, built.triplets).ok, "构建结果应通过验证"

    # 去掉任意一个非根三元组都会破坏闭包
    for t in sorted(built.triplets - {root}, key=Triplet.key)[:5]:
        verdict = verify_typing_interpretation(world, built.triplets - {t})
        assert not verdict.ok, f"去掉 {t} 后不应仍是类型解释"

    print(f"  [OK] {len(built.triplets)} 个三元组")
    print("  [OK] 测试通过\n")


def test_id_dispatch_upto():
    """测试 id 分派的 up-to union 核心集"""
    print("测试 3: id 分派 up-to union...")

    world = SemanticWorld.of(ID_DISPATCH.program())
    root = fallback_root(world, 'Y')
    full = build_interpretation(world, root)
    upto = build_upto(world, root)
    assert full.ok and upto.ok, "两种构建都应成功"

    # 根、两个分支调用、f0..f3 的方法体、两种 skip 体（直接调用与 fallback）
    assert len(upto.core) == 9, f"核心集应有 9 个三元组，实际 {len(upto.core)}"
    assert len(upto.core) < len(full.triplets), "核心集应小于完整解释"
    assert upto.obligations <= upto.core, "义务属于核心集"

    verdict = verify_upto_union(world, upto.core, upto.obligations, root)
    assert verdict.ok, f"up-to 证书应通过验证: {verdict.reason}"

    explicit = materialize_upto_union(world, upto.core, upto.obligations)
    assert verify_typing_interpretation(world, explicit).ok, "展开后是完整的类型解释"
    assert upto.core <= explicit, "展开结果包含核心集"

    for t in sorted(upto.core, key=Triplet.key):
        verdict = verify_upto_union(world, upto.core - {t}, upto.obligations - {t}, root)
        assert not verdict.ok, f"去掉核心三元组 {t} 后应被拒绝"

    print(f"  [OK] 完整: {len(full.triplets)}，核心: {len(upto.core)}，义务: {len(upto.obligations)}")
    print("  [OK] 测试通过\n")


def test_sem_table_on_corpus():
    """测试语法可类型化的程序在语义规则下也成立"""
    print("测试 4: 语义方法表...")

    for entry in CORPUS:
        result = sem_table(SemanticWorld.of(entry.program()))
        assert result.ok, f"{entry.name}: {result.reason}"
        print(f"  [OK] {entry.name}")

    # Proxy 的 fallback 不参与 st-envm，其余方法都可由规则导出
    assert sem_table(SemanticWorld.of(PROXY.program())).ok, "Proxy 的方法表语义安全"

    print("  [OK] 测试通过\n")


def test_lowering():
    """测试把解释降级到更低的级别"""
    print("测试 5: 降级...")

    program = KEEPER.program()
    world = SemanticWorld.of(program)
    sig = program.tenv.member('IKeeper', 'mix')
    method = next(m for m in program.contract('Keeper').methods if m.name == 'mix')
    delta = method_delta(program.tenv, Addr('Keeper'), method.params, sig)
    built = build_interpretation(world, stm_triplet(method.body, delta, 'H'))
    assert built.ok, f"mix 在签名级别 H 下应可构建: {built.reason}"

    lowered = lower_interpretation(world, built.triplets, 'H', 'L')
    assert built.triplets <= lowered, "降级结果包含原解释"
    assert any(t.level == 'L' for t in lowered), "包含降到 L 的三元组"
    assert verify_typing_interpretation(world, lowered).ok, "降级后仍是类型解释"

    try:
        lower_interpretation(world, built.triplets, 'L', 'H')
        raise AssertionError("L 不能降到 H")
    except CertificateError as e:
        print(f"  [OK] {e}")

    print("  [OK] 测试通过\n")


def run_all_tests():
    """运行所有测试"""
    print("\n")
    print("╔" + "═" * 58 + "╗")
    print("║" + " " * 18 + "语义类型测试套件" + " " * 24 + "║")
    print("╚" + "═" * 58 + "╝")
    print("\n")

    try:
        test_pmw_fallback_untypable()
        test_proxy_fallback_interpretation()
        test_id_dispatch_upto()
        test_sem_table_on_corpus()
        test_lowering()

        print("=" * 60)
        print("[SUCCESS] 所有测试通过！")
        print("=" * 60)

    except AssertionError as e:
        print(f"\n[FAIL] 测试失败: {e}")
        return False
    except Exception as e:
        print(f"\n[ERROR] 发生错误: {e}")
        import traceback
        traceback.print_exc()
        return False

    return True


if __name__ == "__main__":
    success = run_all_tests()
    exit(0 if success else 1)
