"""
测试脚本 - 解析器、打印器与交易文件
"""

from dataclasses import fields

import numpy as np

from corpus import CORPUS, EXAMPLES, PROXY
from errors import ParseError, ProgramError
from lattice_types import BOOL, INT, ITOP, Addr, MethodName, VarType
from tinysol_syntax import (
    ARGS_ONLY, AssignField, AssignVar, Call, DCall, DeclVar, Field, If, Lit, Op, Seq, Skip, Throw, Var,
    While, free_addrs, free_vars, parse_program, parse_stack_text, parse_stm_text, parse_transaction,
    pretty_program, pretty_stack, pretty_stm, program_to_json, push,
)


def test_corpus_round_trip():
    """测试语料程序 解析 → 打印 → 解析 得到同样的声明"""
    print("测试 1: 语料往返...")

    for entry in CORPUS + EXAMPLES:
        p1 = entry.program()
        p2 = parse_program(pretty_program(p1), '', entry.lattice)
        assert p1.contracts == p2.contracts, f"{entry.name}: 合约声明往返后不同"
        for name, decl in p1.tenv.interfaces.items():
            if name == ITOP:
                continue
            other = p2.tenv.interfaces[name]
            assert (decl.parent, decl.members) == (other.parent, other.members), \
                f"{entry.name}: 接口 {name} 往返后不同"
        print(f"  [OK] {entry.name}: {len(p1.contracts)} 个合约")

    print("  [OK] 测试通过\n")


def test_name_resolution():
    """测试标识符按地址、方法名、变量解析"""
    print("测试 2: 名字解析...")

    program = PROXY.program()
    s = parse_stm_text("call this.impl.id()$value", program)
    assert isinstance(s, Call), "应解析为 call"
    assert s.method == 'id', "方法位置上的 id 是魔术变量引用"
    assert s.amount == Var('value'), "value 是魔术变量"

    s = parse_stm_text("call X.f1()$0", program)
    assert s.target == Lit(Addr('X')), "X 解析为地址字面量"

    s = parse_stm_text("if id = f2 then skip else skip", program)
    assert s.cond.args[1] == Lit(MethodName('f2')), "f2 解析为方法名字面量"

    s = parse_stm_text("dcall this.impl.id(args)", program)
    assert isinstance(s, DCall) and s.args == ARGS_ONLY, "args 作为完整参数列表"

    print("  [OK] 测试通过\n")


def test_parse_errors_have_positions():
    """测试语法错误带行列号"""
    print("测试 3: 错误位置...")

    source = "contract A : Itop@L {\n  field balance := ;\n}\n"
    try:
        parse_program(source)
        raise AssertionError("缺少字段值应报错")
    except ParseError as e:
        assert e.line == 2, f"错误应在第 2 行，实际 {e.line}"
        assert e.column > 1, "列号应大于 1"
        print(f"  [OK] {e}")

    try:
        parse_program("contract A ? {}")
        raise AssertionError("非法字符应报错")
    except ParseError as e:
        assert e.line == 1, "非法字符在第 1 行"
        print(f"  [OK] {e}")

    for bad in ("this.balance := 1", "args := 1", "call X.f1()"):
        try:
            parse_stm_text(bad, PROXY.program())
            raise AssertionError(f"应拒绝: {bad}")
        except ParseError as e:
            print(f"  [OK] 拒绝 {bad!r}: {e}")

    print("  [OK] 测试通过\n")


def test_program_errors():
    """测试缺少必需成员与未声明接口"""
    print("测试 4: 程序结构错误...")

    no_balance = "contract A : Itop@L { func send() { skip } func fallback() { skip } }"
    try:
        parse_program(no_balance)
        raise AssertionError("缺少 balance 应报错")
    except ParseError as e:
        print(f"  [OK] {e}")

    unknown = "contract A : INope@L { field balance := 0; func send() { skip } func fallback() { skip } }"
    try:
        parse_program(unknown)
        raise AssertionError("未声明的接口应报错")
    except ParseError as e:
        print(f"  [OK] {e}")

    bad_iface = "interface IA { balance : int@L; send : () -> cmd@H; fallback : () -> cmd@L; }"
    try:
        parse_program(bad_iface)
        raise AssertionError("send 不是 cmd@L 应报错")
    except ProgramError as e:
        print(f"  [OK] {e}")

    print("  [OK] 测试通过\n")


def test_transaction_file():
    """测试交易文件解析"""
    print("测试 5: 交易文件...")

    program = PROXY.program()
    tx = parse_transaction("# 注释\nOwner CALL Proxy.f1()$0\n\nOwner CALL Proxy.update(X)$1\n", program)
    assert len(tx) == 2, "空行与注释应被忽略"
    caller, call = tx[1]
    assert caller == Addr('Owner'), "调用者为 Owner"
    assert call.method == 'update' and call.args == (Lit(Addr('X')),), "实参为地址 X"
    assert call.amount == Lit(1), "金额为 1"

    for bad in ("Nobody CALL Proxy.f1()$0", "Owner SEND Proxy.f1()$0"):
        try:
            parse_transaction(bad, program)
            raise AssertionError(f"应拒绝交易行: {bad}")
        except ParseError as e:
            assert e.line == 1, "交易错误带行号"

    print("  [OK] 测试通过\n")


def test_stack_text_and_json():
    """测试栈文本读回与规范 JSON"""
    print("测试 6: 栈文本与 JSON...")

    program = PROXY.program()
    s = parse_stm_text("call X.f1()$0; call X.f2()$0", program)
    text = pretty_stack(push(s))
    assert text.endswith('bot'), "栈文本以 bot 结尾"
    assert parse_stack_text(text, program) == push(s), "栈文本应能读回"
    assert pretty_stm(s) == "call X.f1()$0; call X.f2()$0", "语句打印"

    j1 = program_to_json(program)
    j2 = program_to_json(PROXY.program())
    assert j1 == j2, "规范 JSON 应确定"

    print("  [OK] 测试通过\n")


_NAMES = ('x', 'y', 'z', 'this', 'sender', 'value')
_LOCALS = ('x', 'y', 'z')
_ADDRS = (Addr('A'), Addr('B'), Addr('C'))


def _pick(values, rng):
    return values[int(rng.integers(len(values)))]


def _random_expr(rng, depth):
    kind = int(rng.integers(4 if depth > 1 else 2))
    if kind == 0:
        return Lit(_pick((0, 3, True, MethodName('m'), *_ADDRS), rng))
    if kind == 1:
        return Var(_pick(_NAMES, rng))
    if kind == 2:
        return Field(_random_expr(rng, depth - 1), 'p')
    return Op('+', (_random_expr(rng, depth - 1), _random_expr(rng, depth - 1)))


def _random_args(rng, depth):
    return tuple(_random_expr(rng, depth) for _ in range(int(rng.integers(3))))


def _random_stm(rng, depth):
    kind = int(rng.integers(10 if depth > 1 else 6))
    if kind == 0:
        return Skip()
    if kind == 1:
        return Throw()
    if kind == 2:
        return AssignVar(_pick(_LOCALS, rng), _random_expr(rng, depth))
    if kind == 3:
        return AssignField('p', _random_expr(rng, depth))
    if kind == 4:
        return Call(_random_expr(rng, depth), _pick(('m', 'id'), rng), _random_args(rng, depth),
                    _random_expr(rng, depth))
    if kind == 5:
        return DCall(_random_expr(rng, depth), _pick(('m', 'id'), rng), _random_args(rng, depth))
    if kind == 6:
        vtype = VarType(_pick((INT, BOOL), rng), 'L')
        return DeclVar(vtype, _pick(_LOCALS, rng), _random_expr(rng, depth - 1), _random_stm(rng, depth - 1))
    if kind == 7:
        return Seq(_random_stm(rng, depth - 1), _random_stm(rng, depth - 1))
    if kind == 8:
        return If(_random_expr(rng, depth - 1), _random_stm(rng, depth - 1), _random_stm(rng, depth - 1))
    return While(_random_expr(rng, depth - 1), _random_stm(rng, depth - 1))


def _reference_names(node):
    """逐节点遍历：变量名去掉外层 let 绑定的名字，地址字面量全部收集"""
    names, addrs = set(), set()

    def visit(n, bound):
        if isinstance(n, Lit):
            if isinstance(n.value, Addr):
                addrs.add(n.value)
            return
        if isinstance(n, (Var, AssignVar)):
            used = {n.name}
        elif isinstance(n, AssignField):
            used = {'this'}
        elif isinstance(n, DCall) or (isinstance(n, Call) and n.method == 'id'):
            used = {'id'}
        else:
            used = set()
        names.update(used - bound)
        for f in fields(n):
            child = getattr(n, f.name)
            inner = bound | {n.name} if isinstance(n, DeclVar) and f.name == 'body' else bound
            for c in (child if isinstance(child, tuple) else (child,)):
                if isinstance(c, (Lit, Var, Field, Op, Skip, Throw, DeclVar, AssignVar, AssignField,
                                  Seq, If, While, Call, DCall)):
                    visit(c, inner)

    visit(node, frozenset())
    return names, addrs


def test_free_names():
    """测试 free_vars / free_addrs 与逐节点遍历的参照结果一致"""
    print("测试 7: 自由名...")

    s = DeclVar(VarType(INT, 'L'), 'x', Var('y'), Seq(AssignVar('x', Var('z')), AssignField('p', Lit(Addr('A')))))
    assert free_vars(s) == {'y', 'z', 'this'}, f"let 绑定的 x 不自由: {free_vars(s)}"
    assert free_addrs(s) == {Addr('A')}, "地址字面量"
    assert free_vars(DCall(Lit(Addr('B')), 'm', ())) == {'id'}, "dcall 总是用到 id"

    rng = np.random.default_rng(2024)
    for i in range(300):
        node = _random_stm(rng, int(rng.integers(1, 7))) if i % 3 else _random_expr(rng, int(rng.integers(1, 7)))
        names, addrs = _reference_names(node)
        assert free_vars(node) == names, f"FV 不一致: {node}\n  {free_vars(node)} != {names}"
        assert free_addrs(node) == addrs, f"FA 不一致: {node}\n  {free_addrs(node)} != {addrs}"

    print("  [OK] 300 个随机语法树")
    print("  [OK] 测试通过\n")


def run_all_tests():
    """运行所有测试"""
    print("\n")
    print("╔" + "═" * 58 + "╗")
    print("║" + " " * 18 + "语法层测试套件" + " " * 26 + "║")
    print("╚" + "═" * 58 + "╝")
    print("\n")

    try:
        test_corpus_round_trip()
        test_name_resolution()
        test_parse_errors_have_positions()
        test_program_errors()
        test_transaction_file()
        test_stack_text_and_json()
        test_free_names()

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
