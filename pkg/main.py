"""
TinySol 命令行入口

    python main.py typecheck proxy.tsol --interfaces proxy.tsi --explain
    python main.py run pmw.tsol --tx attack.txt --typed --stuck-witness entry.tsol --this Proxy
    python main.py certify proxy.tsol --address Proxy --out proxy.cert.json
    python main.py ci combined.tsol --trusted Proxy,X,User --tx tx.txt --mutations 100
    python main.py ledger append proxy.tsol --cert proxy.cert.json --store ledger.jsonl
    python main.py client-check client.tsol --store ledger.jsonl

程序文件也可以写成 corpus:<名字>，直接使用 corpus.py 中的样例。
退出码：0 成功，1 判定为否，2 输入错误（TinySolError）。
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple

from call_integrity import (
    TrustPartition, check_call_integrity, ci_report, theorem_ci_check, typed_transaction,
)
from certificates import (
    certify, certify_fallback, load_certificate, save_certificate, verify_certificate,
)
from config import CIConfig, RunConfig, SearchBudget, TheoremConfig
from corpus import CORPUS, get_corpus_program
from errors import TinySolError
from lattice_types import Delta, VarType
from ledger import LedgerStore, client_typecheck_against_ledger, ledger_report
from runtime import compile_transaction, initial_configuration, run_untyped
from semantic_typing import SemanticWorld, stm_triplet
from static_checks import TypeContext, check_program, typecheck_stm
from theorems import THEOREMS, checked_instances, run_theorems, theorem_report
from tinysol_syntax import (
    Program, parse_program, parse_stm_text, parse_transaction, program_to_json, push,
)
from typed_semantics import find_stuck_witness, run_typed

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_NO, EXIT_ERROR = 0, 1, 2


# =============================================================================
# 1. 输入
# =============================================================================

def _read(path: Optional[str]) -> str:
    return Path(path).read_text(encoding='utf-8') if path else ''


def load_sources(args) -> Tuple[str, str, str, Optional[str]]:
    """(合约源码, 接口源码, 格源码, 语料自带的第一个交易)"""
    if args.file.startswith('corpus:'):
        entry = get_corpus_program(args.file.split(':', 1)[1])
        lattice = _read(args.lattice) if args.lattice else entry.lattice
        tx = entry.transactions[0] if entry.transactions else None
        return entry.source, entry.interfaces, lattice, tx
    return _read(args.file), _read(args.interfaces), _read(args.lattice), None


def load_program(args) -> Tuple[Program, Optional[str]]:
    source, interfaces, lattice, tx = load_sources(args)
    return parse_program(source, interfaces, lattice), tx


def load_transaction(args, program: Program, default: Optional[str]):
    text = _read(args.tx) if getattr(args, 'tx', None) else default
    if text is None:
        raise TinySolError("需要 --tx 交易文件")
    return parse_transaction(text, program)


def entry_delta(program: Program, this: Optional[str]) -> Delta:
    address = this or program.contracts[0].address
    t = program.tenv.address_type(address)
    if t is None:
        raise TinySolError(f"未知的地址 {address}")
    return Delta.of({'this': VarType(t.base, t.level)})


# =============================================================================
# 2. 子命令
# =============================================================================

def cmd_typecheck(args) -> int:
    program, _ = load_program(args)
    if args.dump_ast:
        print(program_to_json(program))
        return EXIT_OK
    if args.stm:
        level = args.stm_level or program.lattice.bottom
        ctx = TypeContext(program.tenv, entry_delta(program, args.this))
        report = typecheck_stm(ctx, parse_stm_text(args.stm, program), level)
    else:
        report = check_program(program)
    print("类型检查: " + ("PASS" if report else "FAIL"))
    if not report and args.explain:
        for problem in report.problems:
            print(f"  - {problem}")
    return EXIT_OK if report else EXIT_NO


def cmd_run(args) -> int:
    program, default_tx = load_program(args)
    config = RunConfig(max_steps=args.max_steps, typed=args.typed, level=args.level,
                       assert_preservation=args.assert_preservation)
    if args.stuck_witness:
        stm = parse_stm_text(_read(args.stuck_witness), program)
        ctx = TypeContext(program.tenv, entry_delta(program, args.this))
        level = config.level or program.lattice.bottom
        world = SemanticWorld.of(program)
        witness = find_stuck_witness(ctx, world.table, push(stm), level)
        if witness is None:
            print("没有找到卡住见证")
        else:
            print("卡住见证:")
            for i, item in enumerate(witness):
                print(f"  {i}: {item}")
    tx = load_transaction(args, program, default_tx)
    if config.typed:
        result = run_typed(typed_transaction(program, tx, level=config.level), config.max_steps,
                           assert_preservation=config.assert_preservation)
        state = result.final.config.state
    else:
        result = run_untyped(initial_configuration(program, compile_transaction(tx)), config.max_steps)
        state = result.config.state
    print(f"状态: {result.status}（{result.steps} 步）")
    if result.reason:
        print(f"原因: {result.reason}")
    for label in result.trace:
        print(f"  {label}")
    for address in sorted(state, key=str):
        fields = ', '.join(f"{k}={v}" for k, v in state[address].items())
        print(f"  {address}: {fields}")
    if args.trace:
        with open(args.trace, 'w', encoding='utf-8') as fh:
            for label in result.trace:
                fh.write(json.dumps(label.as_dict(), ensure_ascii=False) + '\n')
    return EXIT_OK if result.status == 'terminated' else EXIT_NO


def cmd_certify(args) -> int:
    program, _ = load_program(args)
    budget = SearchBudget(max_triplets=args.max_triplets, max_depth=args.max_depth)
    if args.entry:
        level = args.level or program.lattice.bottom
        root = stm_triplet(parse_stm_text(args.entry, program), entry_delta(program, args.this), level)
        cert = certify(program, root, args.kind, budget)
    elif args.address:
        cert = certify_fallback(program, args.address, args.level, args.kind, budget)
    else:
        raise TinySolError("需要 --entry 或 --address")
    save_certificate(cert, args.out)
    print(f"证书已写入 {args.out}: {cert.kind}, {len(cert.core)} 个三元组, {len(cert.obligations)} 个义务")
    return EXIT_OK


def cmd_verify_cert(args) -> int:
    program, _ = load_program(args)
    verdict = verify_certificate(program, load_certificate(args.cert))
    print("证书验证: " + ("PASS" if verdict else f"FAIL ({verdict.reason})"))
    return EXIT_OK if verdict else EXIT_NO


def cmd_ci(args) -> int:
    program, default_tx = load_program(args)
    tx = load_transaction(args, program, default_tx)
    if args.theorem:
        result = theorem_ci_check(program, tx, seed=args.seed, max_steps=args.max_steps)
        print(f"类型化调用完整性: {result.status} {result.detail}")
        return EXIT_NO if result.status == 'fail' else EXIT_OK
    if args.trusted:
        partition = TrustPartition.of(program, [a.strip() for a in args.trusted.split(',') if a.strip()])
    else:
        partition = TrustPartition.by_level(program, program.lattice.bottom)
        if partition is None:
            raise TinySolError("合约不能按级别划分，请用 --trusted 指定可信合约")
    config = CIConfig(mutations=args.mutations, seed=args.seed, max_steps=args.max_steps)
    report = check_call_integrity(program, partition, tx, config)
    print(report.summary())
    if args.report:
        doc = {'summary': ci_report({args.file: report}).to_dict(orient='records'), 'variants': report.rows}
        Path(args.report).write_text(json.dumps(doc, ensure_ascii=False, indent=2), encoding='utf-8')
    return EXIT_OK if report else EXIT_NO


def cmd_ledger(args) -> int:
    store = LedgerStore(args.store)
    if args.action == 'init':
        store.init(force=args.force)
        print(f"账本已初始化: {args.store}")
        return EXIT_OK
    if args.action == 'append':
        if not args.file:
            raise TinySolError("append 需要合约文件")
        source, interfaces, lattice, _ = load_sources(args)
        cert = load_certificate(args.cert) if args.cert else None
        entry = store.append(source, interfaces, lattice, args.address, cert)
        kind = 'syntactic-only' if entry.syntactic_only else 'certified'
        print(f"已追加条目 {entry.index}: {entry.address} ({kind})")
        return EXIT_OK
    report = store.verify()
    df = ledger_report(store, report)
    if args.action == 'show':
        print(df.to_string(index=False) if not df.empty else "（空账本）")
        return EXIT_OK
    print("账本校验: " + ("PASS" if report else "FAIL"))
    failure = report.first_failure
    if failure:
        print(f"  条目 {failure.index}: {failure.detail}")
    return EXIT_OK if report else EXIT_NO


def cmd_client_check(args) -> int:
    program, _ = load_program(args)
    clients = [c.strip() for c in args.clients.split(',')] if args.clients else None
    result = client_typecheck_against_ledger(LedgerStore(args.store), program, clients)
    print("客户端检查: " + ("PASS" if result else "FAIL"))
    if result.certificates_used:
        print(f"  使用的证书: {', '.join(result.certificates_used)}")
    for problem in result.problems:
        print(f"  - {problem}")
    return EXIT_OK if result else EXIT_NO


def cmd_theorems(args) -> int:
    programs = [(p.name, p.program()) for p in CORPUS]
    results = run_theorems(programs, TheoremConfig(instances=args.instances, seed=args.seed))
    df = theorem_report(results)
    print(df.to_string(index=False))
    if args.report:
        df.to_csv(args.report, index=False)
    counts = checked_instances(results)
    short = [t for t in THEOREMS if counts.get(t, 0) < args.instances]
    if short:
        print(f"实例不足 {args.instances}: {', '.join(short)}")
    return EXIT_NO if int(df['fail'].sum()) or short else EXIT_OK


# =============================================================================
# 3. 参数解析
# =============================================================================

def _program_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument('file', nargs=None if required else '?', default=None,
                   help=".tsol 合约文件或 corpus:<名字>")
    p.add_argument('--interfaces', help=".tsi 接口文件")
    p.add_argument('--lattice', help=".lat 格文件（缺省为 L ⊑ H）")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='tinysol', description="TinySol 安全类型工具链")
    parser.add_argument('--verbose', action='store_true', help="输出调试日志")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('typecheck', help="语法类型检查")
    _program_args(p)
    p.add_argument('--stm', help="只检查这条语句")
    p.add_argument('--this', help="--stm 中 this 的地址")
    p.add_argument('--stm-level', help="--stm 的命令级别")
    p.add_argument('--explain', action='store_true', help="打印失败的规则实例")
    p.add_argument('--dump-ast', action='store_true', help="输出规范 JSON 后退出")
    p.set_defaults(func=cmd_typecheck)

    p = sub.add_parser('run', help="执行交易")
    _program_args(p)
    p.add_argument('--tx', help="交易文件")
    p.add_argument('--typed', action='store_true', help="使用类型化语义")
    p.add_argument('--level', help="类型化执行的初始级别")
    p.add_argument('--assert-preservation', action='store_true')
    p.add_argument('--max-steps', type=int, default=RunConfig.max_steps)
    p.add_argument('--trace', help="把调用标签写入 JSONL")
    p.add_argument('--stuck-witness', help="对该语句文件搜索卡住见证")
    p.add_argument('--this', help="--stuck-witness 中 this 的地址")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser('certify', help="生成语义类型证书")
    _program_args(p)
    p.add_argument('--entry', help="入口语句")
    p.add_argument('--this', help="入口语句中 this 的地址")
    p.add_argument('--address', help="为该合约的 fallback 生成证书")
    p.add_argument('--level', help="根三元组的级别")
    p.add_argument('--kind', choices=('full', 'upto'), default='full')
    p.add_argument('--max-triplets', type=int, default=SearchBudget.max_triplets)
    p.add_argument('--max-depth', type=int, default=SearchBudget.max_depth)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser('verify-cert', help="验证证书")
    _program_args(p)
    p.add_argument('cert')
    p.set_defaults(func=cmd_verify_cert)

    p = sub.add_parser('ci', help="调用完整性差分测试")
    _program_args(p)
    p.add_argument('--tx', help="交易文件")
    p.add_argument('--trusted', help="逗号分隔的可信地址；缺省按格底级别划分")
    p.add_argument('--mutations', type=int, default=CIConfig.mutations)
    p.add_argument('--seed', type=int, default=CIConfig.seed)
    p.add_argument('--max-steps', type=int, default=CIConfig.max_steps)
    p.add_argument('--report', help="JSON 报告路径")
    p.add_argument('--theorem', action='store_true', help="改用类型化的定理检查")
    p.set_defaults(func=cmd_ci)

    p = sub.add_parser('ledger', help="证书账本")
    p.add_argument('action', choices=('init', 'append', 'verify', 'show'))
    _program_args(p, required=False)
    p.add_argument('--store', default='ledger.jsonl')
    p.add_argument('--address', help="要发布的合约地址")
    p.add_argument('--cert', help="随条目发布的证书")
    p.add_argument('--force', action='store_true', help="init 时覆盖已有账本")
    p.set_defaults(func=cmd_ledger)

    p = sub.add_parser('client-check', help="依据账本检查客户端合约")
    _program_args(p)
    p.add_argument('--store', default='ledger.jsonl')
    p.add_argument('--clients', help="逗号分隔的待检查合约；缺省为不在账本上的合约")
    p.set_defaults(func=cmd_client_check)

    p = sub.add_parser('theorems', help="在语料库上运行随机化定理检查")
    p.add_argument('--instances', type=int, default=TheoremConfig.instances)
    p.add_argument('--seed', type=int, default=TheoremConfig.seed)
    p.add_argument('--report', help="CSV 报告路径")
    p.set_defaults(func=cmd_theorems)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        return args.func(args)
    except TinySolError as err:
        print(f"[错误] {err}")
        return EXIT_ERROR
    except (OSError, ValueError) as err:
        print(f"[错误] {err}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
