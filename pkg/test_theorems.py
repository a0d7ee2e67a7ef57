"""
测试脚本 - 随机化定理检查
"""

import numpy as np

from corpus import CORPUS, KEEPER, VAULT
from lattice_types import INT, Addr, Delta, VarType
from runtime import Configuration, elaborate_declarations
from static_checks import TypeContext, states_equal_at
from theorems import (
    THEOREMS, TheoremResult, check_coercion, check_expr_safety, check_noninterference, check_preservation,
    check_static_coercion, checked_instances, noninterference_step, perturb_above, perturb_vars, random_state,
    random_transaction, run_theorems, stack_coercion_step, theorem_report,
)
from tinysol_syntax import Lvl, VarEnv, parse_stm_text, push
from typed_semantics import TypedConfiguration


def test_random_instances():
    """测试随机状态良类型、随机交易只调用已声明方法"""
    print("测试 1: 随机实例...")

    rng = np.random.default_rng(11)
    program = VAULT.program()
    _, initial = elaborate_declarations(program)
    for _ in range(10):
        state = random_state(program, rng)
        assert set(state) == set(initial), "地址集合不变"
        tx = random_transaction(program, rng, length=4)
        assert len(tx) == 4, "交易长度"
        assert all(call.method != 'fallback' for _, call in tx), "不直接调用 fallback"

    state = random_state(program, rng)
    other = perturb_above(program, state, 'L', rng)
    ctx = TypeContext(program.tenv, Delta.of({'k': VarType(INT, 'H'), 'n': VarType(INT, 'L')}))
    env = VarEnv.of({'k': 0, 'n': 1})
    changed = set()
    for _ in range(20):
        other_env = perturb_vars(program, ctx, env, 'L', rng)
        assert other_env.get('n') == 1, "L 变量不变"
        changed.add(other_env.get('k'))
        assert states_equal_at(ctx, (state, env), (other, other_env), 'L'), "扰动后仍 L-等价"
    assert len(changed) > 1, "H 变量被改写"

    print("  [OK] 测试通过\n")


def _vault_config(stm_text, level, delta_extra, values, rest=()):
    program = VAULT.program()
    table, state = elaborate_declarations(program)
    t = program.tenv.address_type('Vault')
    entries = {'this': VarType(t.base, t.level), **delta_extra}
    ctx = TypeContext(program.tenv, Delta.of(entries))
    stm = parse_stm_text(stm_text, program, bound=list(delta_extra))
    config = Configuration(push(stm, tuple(rest)), table, state, VarEnv.of({'this': Addr('Vault'), **values}))
    return program, TypedConfiguration(ctx, level, config)


def test_single_steps():
    """测试单步非干扰与栈的强制转换"""
    print("测试 2: 单步检查...")

    rng = np.random.default_rng(3)
    program, tc = _vault_config("this.visits := this.visits + n", 'L',
                                {'n': VarType(INT, 'L'), 'k': VarType(INT, 'H')}, {'n': 1, 'k': 7})
    for observer in ('L', 'H'):
        for _ in range(5):
            checked, problem = noninterference_step(program, tc, observer, rng)
            assert checked and not problem, f"{observer}: {problem}"

    # 把 H 变量写进 L 变量在类型化语义中卡住，配对不计入
    program, tc = _vault_config("n := k", 'L', {'n': VarType(INT, 'L'), 'k': VarType(INT, 'H')}, {'n': 1, 'k': 7})
    checked, problem = noninterference_step(program, tc, 'L', rng)
    assert not checked and not problem, "卡住的配对不比较"

    # H 级执行、栈中留有 L：在 L 上走一步结果相同
    program, tc = _vault_config("this.secret := k", 'H', {'k': VarType(INT, 'H')}, {'k': 3}, rest=(Lvl('L'),))
    checks, problem = stack_coercion_step(tc)
    assert checks == 1 and not problem, f"降到 L 应得到同样的归约: {problem}"

    program, tc = _vault_config("this.secret := k", 'H', {'k': VarType(INT, 'H')}, {'k': 3}, rest=(Lvl('H'),))
    checks, problem = stack_coercion_step(tc)
    assert checks == 0 and not problem, "firstS 为 H 时没有更低的级别可比较"

    print("  [OK] 测试通过\n")


def test_single_instances():
    """测试单个实例上的各项检查"""
    print("测试 3: 单实例...")

    rng = np.random.default_rng(5)
    for entry in (VAULT, KEEPER):
        program = entry.program()
        tx = entry.transaction(0, program)
        state = random_state(program, rng)
        r = check_preservation(program, tx, state, entry.name)
        assert r.status == 'pass', f"{entry.name} 保持性: {r.status} {r.detail}"
        r = check_noninterference(program, tx, state, rng, entry.name)
        assert r.status == 'pass' and r.checks >= 2, f"{entry.name} 非干扰: {r.status} {r.detail}"
        r = check_coercion(program, tx, state, rng, entry.name)
        assert r.ok, f"{entry.name} 强制转换: {r.detail}"
        r = check_expr_safety(program, rng, entry.name)
        assert r.ok, f"{entry.name} 表达式安全: {r.detail}"
        print(f"  [OK] {entry.name}")

    print("  [OK] 测试通过\n")


def test_static_coercion():
    """测试语句级别单调、表达式提升与解释降级"""
    print("测试 4: 静态强制转换...")

    for entry in CORPUS:
        results = check_static_coercion(entry.program(), entry.name)
        failed = [r for r in results if not r.ok]
        assert not failed, f"{entry.name}: {[r.detail for r in failed]}"
    print("  [OK] 测试通过\n")


def test_all_theorems():
    """测试每个定理至少 200 个实际检查过的随机实例，且没有失败"""
    print("测试 5: 批量定理检查...")

    programs = [(entry.name, entry.program()) for entry in CORPUS]
    results = run_theorems(programs)
    assert all(isinstance(r, TheoremResult) for r in results), "结果类型"
    failed = [r for r in results if r.status == 'fail']
    assert not failed, f"{len(failed)} 项失败: {[(r.theorem, r.program, r.detail) for r in failed[:3]]}"

    counts = checked_instances(results)
    for theorem in THEOREMS:
        assert counts.get(theorem, 0) >= 200, f"{theorem} 只检查了 {counts.get(theorem, 0)} 个实例"

    df = theorem_report(results)
    assert list(df.columns) == ['theorem', 'pass', 'fail', 'skip', 'checks'], "汇总表列"
    assert set(df['theorem']) == set(THEOREMS) | {'static-coercion'}, f"覆盖所有定理: {set(df['theorem'])}"
    assert int(df['fail'].sum()) == 0, "没有失败"
    ni = df[df['theorem'] == 'noninterference'].iloc[0]
    assert int(ni['checks']) >= 500, f"非干扰应至少比较 500 对，实际 {ni['checks']}"

    print(df.to_string(index=False))
    print("  [OK] 测试通过\n")


def run_all_tests():
    """运行所有测试"""
    print("\n")
    print("╔" + "═" * 58 + "╗")
    print("║" + " " * 19 + "定理检查测试套件" + " " * 23 + "║")
    print("╚" + "═" * 58 + "╝")
    print("\n")

    try:
        test_random_instances()
        test_single_steps()
        test_single_instances()
        test_static_coercion()
        test_all_theorems()

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
