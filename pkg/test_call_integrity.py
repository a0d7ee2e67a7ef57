"""
测试脚本 - 调用完整性：差分变异测试与类型化检查
"""

from call_integrity import TrustPartition, check_call_integrity, ci_report, theorem_ci_check
from config import CIConfig
from corpus import AUCTION, COMBINED_PROXY, KEEPER, NOTARY, PMW, PROXY
from lattice_types import Addr


def test_combined_proxy_passes():
    """测试组合代理：变异不可信的 Ext 不影响可信合约的调用序列"""
    print("测试 1: 组合代理...")

    program = COMBINED_PROXY.program()
    partition = TrustPartition.by_level(program, 'L')
    assert partition is not None, "组合代理可按级别划分"
    assert partition.trusted == {Addr('Proxy'), Addr('X'), Addr('User')}, "可信合约"
    assert partition.untrusted == {Addr('Ext')}, "不可信合约"

    reports = {}
    for i in range(len(COMBINED_PROXY.transactions)):
        report = check_call_integrity(program, partition, COMBINED_PROXY.transaction(i, program),
                                      CIConfig(mutations=50))
        assert report.ok, f"交易 {i} 应通过: {report.divergence}"
        assert report.variants == 50, "执行了 50 个变体"
        assert report.compared > 0, "至少有一个变体可比较"
        reports[f"combined-proxy#{i}"] = report
        print(f"  [OK] 交易 {i}: {report.summary()}")

    df = ci_report(reports)
    assert list(df['result']) == ['PASS', 'PASS'], "汇总表两行都为 PASS"
    assert {'name', 'trusted', 'variants', 'compared', 'inconclusive'} <= set(df.columns), "汇总表列"

    print("  [OK] 测试通过\n")


def test_pmw_diverges():
    """测试 PMW：只信任 Proxy 时，变异实现合约会改变 Proxy 的调用序列"""
    print("测试 2: PMW 分歧...")

    program = PMW.program()
    partition = TrustPartition.of(program, ['Proxy'])
    assert Addr('X') in partition.untrusted, "实现合约不可信"

    report = check_call_integrity(program, partition, PMW.transaction(0, program),
                                  CIConfig(mutations=20, seed=7))
    assert not report.ok, "应发现分歧"
    assert report.divergence.address == 'Proxy', "分歧发生在 Proxy 的调用序列上"
    assert report.compared >= 1, "分歧来自可比较的变体"

    print(f"  [OK] {report.divergence}")
    print("  [OK] 测试通过\n")


def test_partition_errors():
    """测试信任划分的错误输入"""
    print("测试 3: 信任划分...")

    program = PROXY.program()
    try:
        TrustPartition.of(program, ['Proxy', 'Nowhere'])
        raise AssertionError("未知地址应报错")
    except ValueError as e:
        print(f"  [OK] {e}")

    assert TrustPartition.by_level(NOTARY.program(), 'L') is None, "Notary 的字段级别混合，不能划分"

    print("  [OK] 测试通过\n")


def test_typed_call_integrity():
    """测试类型化语义下的调用完整性检查"""
    print("测试 4: 类型化调用完整性...")

    for entry in (AUCTION, KEEPER):
        program = entry.program()
        result = theorem_ci_check(program, entry.transaction(0, program), seed=1)
        assert result.status == 'pass', f"{entry.name}: {result.status} {result.detail}"
        print(f"  [OK] {entry.name}: pass")

    for entry in (NOTARY, PROXY):
        program = entry.program()
        result = theorem_ci_check(program, entry.transaction(0, program))
        assert result.status == 'inapplicable', f"{entry.name} 应不适用，实际 {result.status}"
        assert result.ok, "不适用不算失败"
        print(f"  [OK] {entry.name}: {result.detail}")

    print("  [OK] 测试通过\n")


def run_all_tests():
    """运行所有测试"""
    print("\n")
    print("╔" + "═" * 58 + "╗")
    print("║" + " " * 18 + "调用完整性测试套件" + " " * 22 + "║")
    print("╚" + "═" * 58 + "╝")
    print("\n")

    try:
        test_combined_proxy_passes()
        test_pmw_diverges()
        test_partition_errors()
        test_typed_call_integrity()

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
