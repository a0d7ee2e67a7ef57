"""
测试脚本 - REST API 与命令行
"""

import tempfile
from pathlib import Path

from app import app
from corpus import COMBINED_PROXY, COUNTER, PMW, PROXY
from ledger import LedgerStore
from main import main


def _body(entry, **extra):
    data = {'source': entry.source, 'interfaces': entry.interfaces, 'lattice': entry.lattice}
    data.update(extra)
    return data


def test_api_typecheck_and_run():
    """测试语料、类型检查与执行接口"""
    print("测试 1: 类型检查与执行接口...")

    client = app.test_client()
    data = client.get('/api/corpus').get_json()
    assert data['success'] and len(data['corpus']) >= 8, "返回语料库"
    assert any(p['name'] == 'pmw' for p in data['examples']), "包含 PMW 示例"

    data = client.post('/api/typecheck', json=_body(COUNTER)).get_json()
    assert data['success'] and data['ok'], "计数器可类型化"
    data = client.post('/api/typecheck', json=_body(PROXY)).get_json()
    assert data['success'] and not data['ok'] and data['problems'], "Proxy 不可语法类型化"

    resp = client.post('/api/typecheck', json={'source': 'contract ?'})
    assert resp.status_code == 400 and not resp.get_json()['success'], "语法错误返回 400"

    data = client.post('/api/run', json=_body(PMW, transaction=PMW.transactions[0])).get_json()
    assert data['status'] == 'terminated', "非类型化执行终止"
    assert data['state']['Proxy']['owner'] == 'Attacker', "owner 被改写"

    data = client.post('/api/run', json=_body(PMW, transaction=PMW.transactions[0], typed=True)).get_json()
    assert data['status'] == 'typed-stuck' and 'r-dcall' in data['reason'], "类型化执行卡住"

    print("  [OK] 测试通过\n")


def test_api_certificates_and_ci():
    """测试证书与调用完整性接口"""
    print("测试 2: 证书与调用完整性接口...")

    client = app.test_client()
    data = client.post('/api/certify', json=_body(PROXY, address='Proxy')).get_json()
    assert data['success'], f"生成证书: {data.get('error')}"
    cert = data['certificate']

    data = client.post('/api/verify-cert', json=_body(PROXY, certificate=cert)).get_json()
    assert data['ok'], "证书通过验证"
    cert['program_sha256'] = '0' * 64
    data = client.post('/api/verify-cert', json=_body(PROXY, certificate=cert)).get_json()
    assert data['success'] and not data['ok'], "篡改哈希后验证失败"

    resp = client.post('/api/certify', json=_body(PMW, address='Proxy'))
    assert resp.status_code == 400, "PMW 的 fallback 无法生成证书"

    data = client.post('/api/ci', json=_body(COMBINED_PROXY, transaction=COMBINED_PROXY.transactions[0],
                                             trusted=['Proxy', 'X', 'User'], mutations=10)).get_json()
    assert data['success'] and data['ok'], f"组合代理通过: {data.get('summary')}"
    assert len(data['variants']) == 10, "10 个变体"

    print("  [OK] 测试通过\n")


def test_api_ledger():
    """测试账本接口"""
    print("测试 3: 账本接口...")

    client = app.test_client()
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / 'ledger.jsonl'
        LedgerStore(path).init()
        app.config['LEDGER_PATH'] = str(path)
        try:
            cert = client.post('/api/certify', json=_body(PROXY, address='Proxy')).get_json()['certificate']
            data = client.post('/api/ledger/append', json=_body(PROXY, address='Proxy', certificate=cert)).get_json()
            assert data['success'] and data['index'] == 0, "追加第一个条目"
            data = client.post('/api/ledger/append', json=_body(COUNTER)).get_json()
            assert data['success'] and data['index'] == 1, "追加无证书条目"

            data = client.get('/api/ledger').get_json()
            assert [e['certified'] for e in data['entries']] == [True, False], "条目列表"

            data = client.get('/api/ledger/verify').get_json()
            assert data['ok'] and data['first_failure'] is None, "账本校验通过"

            raw = bytearray(path.read_bytes())
            raw[5] ^= 1
            path.write_bytes(bytes(raw))
            data = client.get('/api/ledger/verify').get_json()
            assert not data['ok'] and data['first_failure'], "修改后校验失败"
        finally:
            app.config.pop('LEDGER_PATH', None)

    print("  [OK] 测试通过\n")


def test_cli():
    """测试命令行子命令与退出码"""
    print("测试 4: 命令行...")

    assert main(['typecheck', 'corpus:counter']) == 0, "计数器类型检查通过"
    assert main(['typecheck', 'corpus:proxy', '--explain']) == 1, "Proxy 类型检查失败"
    assert main(['run', 'corpus:pmw']) == 0, "非类型化执行终止"
    assert main(['run', 'corpus:pmw', '--typed']) == 1, "类型化执行卡住"
    assert main(['typecheck', 'corpus:nope']) == 2, "未知语料返回 2"

    with tempfile.TemporaryDirectory() as tmp:
        cert = str(Path(tmp) / 'proxy.cert.json')
        store = str(Path(tmp) / 'ledger.jsonl')
        assert main(['certify', 'corpus:proxy', '--address', 'Proxy', '--out', cert]) == 0, "生成证书"
        assert main(['verify-cert', 'corpus:proxy', cert]) == 0, "证书验证通过"
        assert main(['verify-cert', 'corpus:counter', cert]) == 1, "换程序后验证失败"

        assert main(['ledger', 'init', '--store', store]) == 0, "初始化账本"
        assert main(['ledger', 'init', '--store', store]) == 2, "重复初始化报错"
        assert main(['ledger', 'append', 'corpus:proxy', '--address', 'Proxy', '--cert', cert,
                     '--store', store]) == 0, "追加带证书条目"
        assert main(['ledger', 'verify', '--store', store]) == 0, "账本校验通过"
        assert main(['ledger', 'show', '--store', store]) == 0, "打印账本"
        assert main(['client-check', 'corpus:client', '--store', store]) == 0, "客户端检查通过"

        trace = str(Path(tmp) / 'trace.jsonl')
        assert main(['run', 'corpus:proxy', '--trace', trace]) == 0, "写出调用标签"
        assert len(Path(trace).read_text(encoding='utf-8').splitlines()) > 0, "调用标签非空"

    assert main(['ci', 'corpus:combined-proxy', '--mutations', '10']) == 0, "按级别划分的差分测试通过"
    assert main(['ci', 'corpus:pmw', '--trusted', 'Proxy', '--mutations', '20', '--seed', '7']) == 1, \
        "PMW 差分测试发现分歧"

    print("  [OK] 测试通过\n")


def run_all_tests():
    """运行所有测试"""
    print("\n")
    print("╔" + "═" * 58 + "╗")
    print("║" + " " * 16 + "REST API 与命令行测试套件" + " " * 17 + "║")
    print("╚" + "═" * 58 + "╝")
    print("\n")

    try:
        test_api_typecheck_and_run()
        test_api_certificates_and_ci()
        test_api_ledger()
        test_cli()

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
