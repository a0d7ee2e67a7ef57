"""
TinySol Web Application
Flask 后端服务 - 提供类型检查、执行、证书与账本的 RESTful API
"""

import logging
import os
from typing import Any, Dict

from flask import Flask, jsonify, request
from flask_cors import CORS

from call_integrity import TrustPartition, check_call_integrity, typed_transaction
from certificates import Certificate, certify, certify_fallback, verify_certificate
from config import CIConfig, ServerConfig
from corpus import CORPUS, EXAMPLES
from errors import TinySolError
from lattice_types import Delta, VarType
from ledger import LedgerStore, ledger_report
from runtime import compile_transaction, initial_configuration, run_untyped
from semantic_typing import stm_triplet
from static_checks import check_program
from tinysol_syntax import Program, parse_program, parse_stm_text, parse_transaction
from typed_semantics import run_typed

logger = logging.getLogger(__name__)

server_config = ServerConfig(ledger_path=os.environ.get('TINYSOL_LEDGER', ServerConfig.ledger_path))

app = Flask(__name__)
CORS(app)  # 允许跨域请求


def _program(data: Dict[str, Any]) -> Program:
    return parse_program(data.get('source', ''), data.get('interfaces', ''), data.get('lattice', ''))


def _store() -> LedgerStore:
    return LedgerStore(app.config.get('LEDGER_PATH', server_config.ledger_path))


def _error(e: Exception):
    """TinySolError 为输入错误 (400)，其余为服务端错误 (500)"""
    if isinstance(e, TinySolError):
        return jsonify({'success': False, 'error': str(e)}), 400
    logger.exception("请求处理失败")
    return jsonify({'success': False, 'error': str(e)}), 500


# =============================================================================
# API：语料
# =============================================================================

@app.route('/api/corpus', methods=['GET'])
def get_corpus():
    """获取内置的样例程序"""
    return jsonify({
        'success': True,
        'corpus': [p.as_dict() for p in CORPUS],
        'examples': [p.as_dict() for p in EXAMPLES],
    })


# =============================================================================
# API：类型检查与执行
# =============================================================================

@app.route('/api/typecheck', methods=['POST'])
def api_typecheck():
    """
    语法类型检查

    请求体：
    {
        "source": "contract ...",
        "interfaces": "interface ...",
        "lattice": ""
    }
    """
    try:
        data = request.get_json() or {}
        report = check_program(_program(data))
        return jsonify({
            'success': True,
            'ok': report.ok,
            'problems': report.problems,
        })
    except Exception as e:
        return _error(e)


@app.route('/api/run', methods=['POST'])
def api_run():
    """
    执行交易

    请求体：
    {
        "source": ..., "interfaces": ..., "lattice": ...,
        "transaction": "Attacker CALL Proxy.init(Attacker)$0",
        "typed": false,
        "level": null,
        "max_steps": 5000
    }
    """
    try:
        data = request.get_json() or {}
        program = _program(data)
        tx = parse_transaction(data.get('transaction', ''), program)
        max_steps = int(data.get('max_steps', 5000))
        if data.get('typed'):
            result = run_typed(typed_transaction(program, tx, level=data.get('level')), max_steps,
                               assert_preservation=bool(data.get('assert_preservation')))
            state = result.final.config.state
        else:
            result = run_untyped(initial_configuration(program, compile_transaction(tx)), max_steps)
            state = result.config.state
        return jsonify({
            'success': True,
            'status': result.status,
            'steps': result.steps,
            'reason': result.reason,
            'trace': [label.as_dict() for label in result.trace],
            'state': {str(a): {k: str(v) for k, v in fields.items()} for a, fields in state.items()},
        })
    except Exception as e:
        return _error(e)


# =============================================================================
# API：证书
# =============================================================================

@app.route('/api/certify', methods=['POST'])
def api_certify():
    """
    生成证书：给出 address 时为该合约的 fallback，否则为 entry 语句

    请求体：
    {
        "source": ..., "interfaces": ..., "lattice": ...,
        "address": "Proxy",
        "entry": "call X.f1()$0", "this": "Owner",
        "level": null,
        "kind": "full" | "upto"
    }
    """
    try:
        data = request.get_json() or {}
        program = _program(data)
        kind = data.get('kind', 'full')
        if data.get('address'):
            cert = certify_fallback(program, data['address'], data.get('level'), kind)
        else:
            this = data.get('this') or program.contracts[0].address
            t = program.tenv.address_type(this)
            if t is None:
                raise TinySolError(f"未知的地址 {this}")
            delta = Delta.of({'this': VarType(t.base, t.level)})
            level = data.get('level') or program.lattice.bottom
            cert = certify(program, stm_triplet(parse_stm_text(data.get('entry', ''), program), delta, level), kind)
        return jsonify({
            'success': True,
            'certificate': cert.model_dump(),
        })
    except Exception as e:
        return _error(e)


@app.route('/api/verify-cert', methods=['POST'])
def api_verify_cert():
    """验证证书：请求体为程序文本加 "certificate" 对象"""
    try:
        data = request.get_json() or {}
        program = _program(data)
        verdict = verify_certificate(program, Certificate.model_validate(data.get('certificate', {})))
        return jsonify({
            'success': True,
            'ok': verdict.ok,
            'reason': verdict.reason,
        })
    except Exception as e:
        return _error(e)


# =============================================================================
# API：调用完整性
# =============================================================================

@app.route('/api/ci', methods=['POST'])
def api_ci():
    """
    调用完整性差分测试

    请求体：
    {
        "source": ..., "interfaces": ..., "lattice": ...,
        "transaction": "...",
        "trusted": ["Proxy", "X"],
        "mutations": 50,
        "seed": 7
    }
    """
    try:
        data = request.get_json() or {}
        program = _program(data)
        tx = parse_transaction(data.get('transaction', ''), program)
        partition = TrustPartition.of(program, data.get('trusted', []))
        config = CIConfig(mutations=int(data.get('mutations', CIConfig.mutations)),
                          seed=int(data.get('seed', CIConfig.seed)),
                          max_steps=int(data.get('max_steps', CIConfig.max_steps)))
        report = check_call_integrity(program, partition, tx, config)
        return jsonify({
            'success': True,
            'ok': report.ok,
            'summary': report.summary(),
            'divergence': str(report.divergence) if report.divergence else None,
            'variants': report.rows,
        })
    except Exception as e:
        return _error(e)


# =============================================================================
# API：账本
# =============================================================================

@app.route('/api/ledger', methods=['GET'])
def api_ledger():
    """账本内容"""
    try:
        store = _store()
        entries = store.entries()
        return jsonify({
            'success': True,
            'entries': [
                {'index': e.index, 'address': e.address, 'interface': e.interface, 'level': e.level,
                 'certified': not e.syntactic_only, 'entry_hash': e.entry_hash}
                for e in entries
            ],
        })
    except Exception as e:
        return _error(e)


@app.route('/api/ledger/append', methods=['POST'])
def api_ledger_append():
    """追加条目：请求体为程序文本、可选的 address 与 certificate"""
    try:
        data = request.get_json() or {}
        cert = data.get('certificate')
        entry = _store().append(
            data.get('source', ''), data.get('interfaces', ''), data.get('lattice', ''),
            data.get('address'), Certificate.model_validate(cert) if cert else None,
        )
        return jsonify({
            'success': True,
            'index': entry.index,
            'address': entry.address,
            'entry_hash': entry.entry_hash,
        })
    except Exception as e:
        return _error(e)


@app.route('/api/ledger/verify', methods=['GET'])
def api_ledger_verify():
    """校验哈希链并重新验证证书"""
    try:
        store = _store()
        report = store.verify()
        df = ledger_report(store, report)
        return jsonify({
            'success': True,
            'ok': report.ok,
            'entries': df.to_dict(orient='records'),
            'first_failure': report.first_failure.detail if report.first_failure else None,
        })
    except Exception as e:
        return _error(e)


# =============================================================================
# 启动服务器
# =============================================================================

if __name__ == '__main__':
    print("=" * 60)
    print("TinySol Web Server")
    print("=" * 60)
    print(f"\n账本文件: {server_config.ledger_path}")
    print("按 Ctrl+C 停止服务器")
    print("=" * 60)

    app.run(debug=server_config.debug, host=server_config.host, port=server_config.port)
