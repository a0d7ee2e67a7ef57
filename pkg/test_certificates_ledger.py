"""
测试脚本 - 证书与账本
"""

import tempfile
from pathlib import Path

import numpy as np

from certificates import (
    certify_fallback, load_certificate, program_sha256, save_certificate, verify_certificate,
)
from corpus import (
    CLIENT, CLIENT_DECLARED, CORPUS, ID_DISPATCH, PROXY, PROXY_INTERFACES, PROXY_SOURCE, SINGLE_LEVEL,
)
from errors import CertificateError, LedgerError
from ledger import LedgerStore, client_typecheck_against_ledger, ledger_report


def test_certificate_round_trip():
    """测试证书生成、保存、读回与验证"""
    print("测试 1: 证书...")

    program = PROXY.program()
    cert = certify_fallback(program, 'Proxy')
    assert cert.kind == 'full', "默认生成完整解释"
    assert cert.program_sha256 == program_sha256(program), "证书绑定程序哈希"
    assert verify_certificate(program, cert).ok, "新生成的证书应通过验证"

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / 'proxy.cert.json'
        save_certificate(cert, path)
        loaded = load_certificate(path)
        assert loaded == cert, "读回的证书应相同"
        assert verify_certificate(program, loaded).ok, "读回的证书应通过验证"

        path.write_text('{"kind": ', encoding='utf-8')
        try:
            load_certificate(path)
            raise AssertionError("损坏的证书文件应报错")
        except CertificateError as e:
            print(f"  [OK] {e}")

    print(f"  [OK] {len(cert.core)} 个三元组")
    print("  [OK] 测试通过\n")


def test_certificate_tampering():
    """测试篡改哈希、程序或核心集后验证失败"""
    print("测试 2: 篡改证书...")

    program = PROXY.program()
    cert = certify_fallback(program, 'Proxy')

    bad_hash = cert.model_copy(update={'program_sha256': '0' * 64})
    assert not verify_certificate(program, bad_hash).ok, "哈希不符应失败"

    other = ID_DISPATCH.program()
    assert not verify_certificate(other, cert).ok, "换一个程序应失败"

    shrunk = cert.model_copy(update={'core': [m for m in cert.core if m != cert.root]})
    assert not verify_certificate(program, shrunk).ok, "核心集缺少根应失败"

    upto = certify_fallback(ID_DISPATCH.program(), 'Y', kind='upto')
    assert upto.kind == 'upto' and upto.obligations, "up-to 证书带义务"
    assert verify_certificate(ID_DISPATCH.program(), upto).ok, "up-to 证书应通过验证"

    print("  [OK] 测试通过\n")


def test_ledger_client_check():
    """测试账本上的证书支持客户端的 st-fcall"""
    print("测试 3: 客户端检查...")

    with tempfile.TemporaryDirectory() as tmp:
        certified = LedgerStore(Path(tmp) / 'certified.jsonl')
        certified.init()
        cert = certify_fallback(PROXY.program(), 'Proxy')
        entry = certified.append(PROXY_SOURCE, PROXY_INTERFACES, SINGLE_LEVEL, 'Proxy', cert)
        assert entry.index == 0 and not entry.syntactic_only, "第一个带证书的条目"
        assert certified.latest('Proxy') == entry, "latest 返回该条目"

        check = client_typecheck_against_ledger(certified, CLIENT.program())
        assert check.ok, f"有证书时客户端应通过: {check.problems}"
        assert check.certificates_used == ['Proxy'], "使用了 Proxy 的证书"
        print(f"  [OK] PASS，使用证书 {check.certificates_used}")

        bare = LedgerStore(Path(tmp) / 'bare.jsonl')
        bare.init()
        bare.append(PROXY_SOURCE, PROXY_INTERFACES, SINGLE_LEVEL, 'Proxy')
        check = client_typecheck_against_ledger(bare, CLIENT.program())
        assert not check.ok, "没有证书时客户端应失败"
        print(f"  [OK] FAIL: {check.problems[0]}")

        check = client_typecheck_against_ledger(bare, CLIENT_DECLARED.program())
        assert check.ok, f"只调用已声明方法无需证书: {check.problems}"

        try:
            bare.init()
            raise AssertionError("非空账本不能重复初始化")
        except LedgerError as e:
            print(f"  [OK] {e}")

        bad = cert.model_copy(update={'program_sha256': 'f' * 64})
        try:
            bare.append(PROXY_SOURCE, PROXY_INTERFACES, SINGLE_LEVEL, 'Proxy', bad)
            raise AssertionError("无效证书不能上账")
        except CertificateError as e:
            print(f"  [OK] {e}")
        assert len(bare.entries()) == 1, "被拒绝的追加不写入账本"

    print("  [OK] 测试通过\n")


def test_ledger_appends_and_mutations():
    """测试 100 次追加后校验通过，任意单字节修改都被发现"""
    print("测试 4: 账本哈希链...")

    rng = np.random.default_rng(3)
    with tempfile.TemporaryDirectory() as tmp:
        store = LedgerStore(Path(tmp) / 'ledger.jsonl')
        store.init()
        for _ in range(100):
            entry = CORPUS[int(rng.integers(len(CORPUS)))]
            store.append(entry.source, entry.interfaces, entry.lattice)
        store.append(PROXY_SOURCE, PROXY_INTERFACES, SINGLE_LEVEL, 'Proxy',
                     certify_fallback(PROXY.program(), 'Proxy'))

        report = store.verify()
        assert report.ok, f"未修改的账本应通过: {report.first_failure}"
        assert len(report.entries) == 101, "101 个条目"

        df = ledger_report(store, report)
        assert len(df) == 101 and df['certified'].sum() == 1, "只有最后一个条目带证书"

        original = store.path.read_bytes()
        mutated = LedgerStore(Path(tmp) / 'mutated.jsonl')
        positions = sorted(set(int(p) for p in rng.integers(0, len(original), 40)))
        positions += [0, len(original) - 1]
        for pos in positions:
            data = bytearray(original)
            data[pos] ^= 1
            mutated.path.write_bytes(bytes(data))
            report = mutated.verify()
            assert not report.ok, f"第 {pos} 字节的修改未被发现"
        print(f"  [OK] {len(positions)} 处单字节修改全部被发现")

        truncated = LedgerStore(Path(tmp) / 'truncated.jsonl')
        truncated.path.write_bytes(original[:-10])
        assert not truncated.verify().ok, "截断的账本应失败"

    print("  [OK] 测试通过\n")


def run_all_tests():
    """运行所有测试"""
    print("\n")
    print("╔" + "═" * 58 + "╗")
    print("║" + " " * 17 + "证书与账本测试套件" + " " * 23 + "║")
    print("╚" + "═" * 58 + "╝")
    print("\n")

    try:
        test_certificate_round_trip()
        test_certificate_tampering()
        test_ledger_client_check()
        test_ledger_appends_and_mutations()

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
