"""
测试脚本 - 语法类型系统、一致性、良构性与 s-等价
"""

import numpy as np

from corpus import CORPUS, ID_DISPATCH, NOTARY, PMW, PROXY, VAULT
from lattice_types import INT, Addr, Delta, VarType
from runtime import elaborate_declarations, eval_expr
from static_checks import (
    UNTYPABLE_CALL, TypeContext, check_consistency, check_program, check_stack_wellformed,
    diff_at_level, expr_has_type, least_type, states_equal_at, typecheck_stm,
)
from theorems import perturb_above, perturb_vars, random_state, sample_expressions
from tinysol_syntax import Lvl, VarEnv, parse_expr_text, parse_stm_text, push


def _ctx(program, this: str) -> TypeContext:
    t = program.tenv.address_type(this)
    return TypeContext(program.tenv, Delta.of({'this': VarType(t.base, t.level)}))


def test_corpus_typechecks():
    """测试语料库中的程序都可语法类型化"""
    print("测试 1: 语料库类型检查...")

    for entry in CORPUS:
        report = check_program(entry.program())
        assert report.ok, f"{entry.name} 应通过类型检查: {report.reason}"
        print(f"  [OK] {entry.name}")

    print("  [OK] 测试通过\n")


def test_id_calls_need_certificates():
    """测试 fallback 中的 id 调用在语法系统中不可类型化"""
    print("测试 2: id 调用...")

    for entry in (PROXY, PMW, ID_DISPATCH):
        report = check_program(entry.program())
        assert not report.ok, f"{entry.name} 不应通过语法类型检查"
        print(f"  [OK] {entry.name}: {report.reason}")

    report = check_program(PROXY.program())
    assert UNTYPABLE_CALL in report.reason, "Proxy 的失败原因是 id 调用"

    print("  [OK] 测试通过\n")


def test_implicit_flow_rejected():
    """测试 H 条件下写 L 字段被拒绝"""
    print("测试 3: 隐式流...")

    program = VAULT.program()
    ctx = _ctx(program, 'Vault')

    ok = typecheck_stm(ctx, parse_stm_text("if this.secret < 10 then this.flag := true else skip", program), 'L')
    assert ok.ok, f"H 条件写 H 字段应通过: {ok.reason}"

    bad = typecheck_stm(ctx, parse_stm_text("if this.secret < 10 then this.visits := 1 else skip", program), 'L')
    assert not bad.ok, "H 条件写 L 字段应失败"
    assert bad.problems[0].startswith('t-assf'), "失败的规则是 t-assf"
    print(f"  [OK] {bad.reason}")

    direct = typecheck_stm(ctx, parse_stm_text("this.visits := this.secret", program), 'L')
    assert not direct.ok, "显式流 H → L 应失败"

    high = typecheck_stm(ctx, parse_stm_text("this.flag := false", program), 'H')
    assert high.ok, "H 级命令可以写 H 字段"
    low_in_high = typecheck_stm(ctx, parse_stm_text("this.visits := 0", program), 'H')
    assert not low_in_high.ok, "H 级命令不能写 L 字段"

    print("  [OK] 测试通过\n")


def test_call_levels():
    """测试调用的级别条件"""
    print("测试 4: 调用级别...")

    program = NOTARY.program()
    ok = typecheck_stm(_ctx(program, 'Notary'), parse_stm_text("call Archive.put(1)$0", program), 'L')
    assert ok.ok, f"L 合约调用 H 方法应通过: {ok.reason}"

    bad = typecheck_stm(_ctx(program, 'Archive'), parse_stm_text("call Notary.record(1)$0", program), 'H')
    assert not bad.ok, "H 合约调用 L 方法应失败"
    assert bad.problems[0].startswith('t-call'), "失败的规则是 t-call"
    print(f"  [OK] {bad.reason}")

    print("  [OK] 测试通过\n")


def test_least_type():
    """测试最小类型"""
    print("测试 5: 最小类型...")

    program = VAULT.program()
    ctx = _ctx(program, 'Vault')
    t = least_type(ctx, parse_expr_text("this.visits + this.secret", program))
    assert str(t) == 'int@H', f"读 H 字段的表达式为 H，实际 {t}"
    t = least_type(ctx, parse_expr_text("this.visits < 3", program))
    assert str(t) == 'bool@L', f"只读 L 字段为 L，实际 {t}"
    assert least_type(ctx, parse_expr_text("this.flag + 1", program)) is None, "bool + int 不可类型化"

    print("  [OK] 测试通过\n")


def test_consistency_and_wellformedness():
    """测试环境一致性与栈良构性"""
    print("测试 6: 一致性与良构性...")

    program = VAULT.program()
    table, state = elaborate_declarations(program)
    tenv = program.tenv
    assert check_consistency(tenv, table, state, VarEnv()).ok, "初始环境一致"

    broken = {a: dict(f) for a, f in state.items()}
    del broken[Addr('Vault')]['visits']
    report = check_consistency(tenv, table, broken, VarEnv())
    assert not report.ok and 'c-envf' in report.reason, "缺少字段应不一致"

    dangling = VarEnv.of({'this': Addr('Nowhere')})
    assert not check_consistency(tenv, table, state, dangling).ok, "变量指向未知地址应不一致"

    ctx = _ctx(program, 'Vault')
    env = VarEnv.of({'this': Addr('Vault')})
    q = (Lvl('H'),)
    assert not check_stack_wellformed(ctx, state, env, 'L', q).ok, "栈中级别高于当前级别违反 wf-sec"
    assert check_stack_wellformed(ctx, state, env, 'H', (Lvl('L'),)).ok, "栈中级别不高于当前级别"

    q = push(parse_stm_text("this.secret := k", program, bound=['k']))
    report = check_stack_wellformed(ctx, state, env, 'L', q)
    assert not report.ok and 'wf-stm' in report.reason, "未绑定的变量违反 wf-stm"

    print("  [OK] 测试通过\n")


def test_s_equivalence():
    """测试 s-等价：H 字段不同的两个状态 L-等价但不 H-等价"""
    print("测试 7: s-等价...")

    program = VAULT.program()
    _, state = elaborate_declarations(program)
    other = {a: dict(f) for a, f in state.items()}
    other[Addr('Vault')]['secret'] = 99
    ctx = _ctx(program, 'Vault')
    env = VarEnv.of({'this': Addr('Vault')})

    assert states_equal_at(ctx, (state, env), (other, env), 'L'), "只有 H 字段不同时 L-等价"
    assert not states_equal_at(ctx, (state, env), (other, env), 'H'), "H 级观察者看得到差异"
    assert diff_at_level(ctx, (state, env), (other, env), 'H') == ['Vault.secret'], "差异位置"

    other[Addr('Vault')]['visits'] = 5
    assert not states_equal_at(ctx, (state, env), (other, env), 'L'), "L 字段不同则不 L-等价"

    print("  [OK] 测试通过\n")


def test_s_equivalence_is_equivalence():
    """测试 s-等价在随机生成的三元组上自反、对称、传递"""
    print("测试 8: s-等价是等价关系...")

    rng = np.random.default_rng(17)
    triples = 0
    for entry in CORPUS:
        program = entry.program()
        lat = program.lattice
        this = program.contracts[0].address
        t = program.tenv.address_type(this)
        ctx = TypeContext(program.tenv, Delta.of({
            'this': VarType(t.base, t.level), 'k': VarType(INT, 'H'), 'n': VarType(INT, 'L')}))
        for _ in range(20):
            a_state = random_state(program, rng)
            a = (a_state, VarEnv.of({'this': Addr(this), 'k': int(rng.integers(3)), 'n': int(rng.integers(3))}))
            chain = [a]
            for _ in range(2):
                s = lat.levels[int(rng.integers(len(lat.levels)))]
                state, env = chain[-1]
                if rng.random() < 0.2:
                    state = random_state(program, rng)
                chain.append((perturb_above(program, state, s, rng), perturb_vars(program, ctx, env, s, rng)))
            a, b, c = chain
            for s in lat.levels:
                assert states_equal_at(ctx, a, a, s), "自反"
                assert states_equal_at(ctx, a, b, s) == states_equal_at(ctx, b, a, s), "对称"
                if states_equal_at(ctx, a, b, s) and states_equal_at(ctx, b, c, s):
                    assert states_equal_at(ctx, a, c, s), f"{entry.name}: 级别 {s} 下不传递"
            triples += 1

    print(f"  [OK] {triples} 个三元组")
    print("  [OK] 测试通过\n")


def test_static_expr_noninterference():
    """测试可在 B_s 下类型化的表达式在 s-等价的状态上求值相同"""
    print("测试 9: 表达式的静态非干扰...")

    rng = np.random.default_rng(23)
    programs = [entry.program() for entry in CORPUS]
    compared = 0
    for i in range(500):
        program = programs[i % len(programs)]
        lat = program.lattice
        sample = sample_expressions(program, rng)
        ctx = sample.ctx
        s = lat.levels[int(rng.integers(len(lat.levels)))]
        other_state = perturb_above(program, sample.state, s, rng)
        other_vars = perturb_vars(program, ctx, sample.vars, s, rng)
        assert states_equal_at(ctx, (sample.state, sample.vars), (other_state, other_vars), s), "配对应 s-等价"
        for e in sample.exprs:
            t = least_type(ctx, e)
            if not expr_has_type(ctx, e, t.base, s):
                continue
            v1 = eval_expr(e, sample.state, sample.vars)
            v2 = eval_expr(e, other_state, other_vars)
            assert v1 == v2, f"{sample.where}: {e} 在 {s}-等价状态上得到 {v1} 与 {v2}"
            compared += 1

    assert compared >= 250, f"比较的表达式太少: {compared}"
    print(f"  [OK] 500 对状态，{compared} 次比较")
    print("  [OK] 测试通过\n")


def run_all_tests():
    """运行所有测试"""
    print("\n")
    print("╔" + "═" * 58 + "╗")
    print("║" + " " * 18 + "静态检查测试套件" + " " * 24 + "║")
    print("╚" + "═" * 58 + "╝")
    print("\n")

    try:
        test_corpus_typechecks()
        test_id_calls_need_certificates()
        test_implicit_flow_rejected()
        test_call_levels()
        test_least_type()
        test_consistency_and_wellformedness()
        test_s_equivalence()
        test_s_equivalence_is_equivalence()
        test_static_expr_noninterference()

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
