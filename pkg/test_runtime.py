"""
测试脚本 - 非类型化小步语义
"""

from dataclasses import replace

from corpus import BANK, COUNTER, ESCROW, PMW, POLL, PROXY, WALLET
from errors import ProgramError, StuckError
from lattice_types import Addr, MethodName
from runtime import (
    Configuration, compile_transaction, elaborate_declarations, initial_configuration, project_trace, run_untyped,
    step_untyped, total_balance,
)
from tinysol_syntax import VarEnv, parse_stm_text, push


def _run(entry, index=0, max_steps=5000):
    program = entry.program()
    tx = entry.transaction(index, program)
    return run_untyped(initial_configuration(program, compile_transaction(tx)), max_steps)


def test_counter():
    """测试计数器与带金额调用"""
    print("测试 1: 计数器...")

    result = _run(COUNTER)
    state = result.config.state
    assert result.status == 'terminated', f"应正常终止: {result.reason}"
    assert state[Addr('Counter')]['n'] == 4, "inc 后 add(3) 得到 4"
    assert state[Addr('Counter')]['balance'] == 1, "Counter 收到 1"
    assert state[Addr('User')]['balance'] == 4, "User 付出 1"
    assert [str(l) for l in result.trace] == [
        "(User, Counter, inc, [], 0)", "(User, Counter, add, [3], 1)",
    ], "调用标签序列"

    print(f"  [OK] {result.steps} 步")
    print("  [OK] 测试通过\n")


def test_proxy_forwarding():
    """测试代理 fallback 经 id 转发"""
    print("测试 2: 代理转发...")

    result = _run(PROXY)
    state = result.config.state
    assert result.status == 'terminated', f"应正常终止: {result.reason}"
    assert state[Addr('X')]['count'] == 3, "f1 置 1，f2 加 2"
    assert state[Addr('X')]['balance'] == 1, "f2 的金额经 fallback 转给 X"
    assert state[Addr('Proxy')]['balance'] == 0, "Proxy 只是中转"

    forwarded = project_trace(result.trace, Addr('Proxy'))
    assert [l.method for l in forwarded] == ['f1', 'f2', 'nothing'], "Proxy 转发了三个调用"
    assert all(l.callee == Addr('X') for l in forwarded), "都转发到 X"

    print("  [OK] 测试通过\n")


def test_pmw_attack():
    """测试 PMW 攻击在非类型化语义下成功"""
    print("测试 3: PMW 攻击...")

    result = _run(PMW)
    state = result.config.state
    assert result.status == 'terminated', f"应正常终止: {result.reason}"
    assert state[Addr('Proxy')]['owner'] == Addr('Attacker'), "owner 被改写为 Attacker"
    assert state[Addr('Attacker')]['balance'] == 100, "余额全部转给 Attacker"
    assert state[Addr('Proxy')]['balance'] == 0, "Proxy 被掏空"
    assert state[Addr('X')]['owner'] == Addr('Owner'), "委托调用不修改 X 自身的状态"

    labels = [str(l) for l in result.trace]
    assert "(Proxy, X, init, [Attacker], 0)" in labels, "委托调用标签"
    assert "(Proxy, Attacker, send, [], 100)" in labels, "转账标签"

    print(f"  [OK] trace: {labels}")
    print("  [OK] 测试通过\n")


def test_loops_and_let():
    """测试 let 作用域与 while"""
    print("测试 4: let 与 while...")

    result = _run(BANK)
    state = result.config.state
    assert result.status == 'terminated', "应正常终止"
    assert state[Addr('Bank')]['total'] == 7, "存入 4 后累计 3 次"
    assert 'i' not in result.config.vars, "let 变量在作用域结束后删除"

    result = _run(POLL)
    state = result.config.state
    assert (state[Addr('Poll')]['yes'], state[Addr('Poll')]['no']) == (1, 1), "关闭后的投票不计数"
    assert state[Addr('Poll')]['open'] is False, "投票已关闭"

    print("  [OK] 测试通过\n")


def test_transfer_and_throw():
    """测试转账守恒与 throw 终止"""
    print("测试 5: 转账与 throw...")

    program = ESCROW.program()
    before = total_balance(initial_configuration(program).state)
    result = _run(ESCROW)
    state = result.config.state
    assert state[Addr('Shop')]['balance'] == 4, "第一次 release 转出 4"
    assert state[Addr('Escrow')]['balance'] == 6, "第二次超额 release 被跳过"
    assert total_balance(state) == before, "余额总和守恒"

    result = _run(WALLET, index=1)
    assert result.status == 'threw', "余额不足时 throw"

    result = _run(WALLET, index=0)
    assert result.status == 'terminated', "正常取款"
    assert result.config.state[Addr('Wallet')]['funds'] == 4, "5 + 2 - 3"

    print("  [OK] 测试通过\n")


def test_stuck_and_budget():
    """测试卡住与步数预算"""
    print("测试 6: 卡住与预算...")

    program = COUNTER.program()
    c = initial_configuration(program)
    env = VarEnv.of({'this': Addr('User')})

    # 目标不是地址
    stuck = Configuration(push(parse_stm_text("call 3.inc()$0", program)), c.table, c.state, env)
    result = run_untyped(stuck)
    assert result.status == 'stuck', "调用整数应卡住"
    print(f"  [OK] stuck: {result.reason}")

    # 不同种类的相等比较
    bad_cmp = Configuration(push(parse_stm_text("if 1 = true then skip else skip", program)),
                            c.table, c.state, env)
    assert run_untyped(bad_cmp).status == 'stuck', "不同种类的相等比较应卡住"

    loop = Configuration(push(parse_stm_text("while true do skip", program)), c.table, c.state, env)
    result = run_untyped(loop, max_steps=50)
    assert result.status == 'budget-exhausted' and result.steps == 50, "死循环耗尽预算"

    assert step_untyped(Configuration((), c.table, c.state, env)) is None, "终止配置没有后继"
    print("  [OK] 测试通过\n")


def test_fcall_binds_id_and_args():
    """测试 fcall 绑定 id 与 args"""
    print("测试 7: fcall 绑定...")

    program = PROXY.program()
    tx = PROXY.transaction(0, program)
    c = initial_configuration(program, compile_transaction(tx))
    c, _ = step_untyped(c)              # ret(this = Owner)
    c, label = step_untyped(c)          # Owner CALL Proxy.f1()
    assert label.method == 'f1' and label.callee == Addr('Proxy'), "第一个调用"
    assert c.vars.get('id') == MethodName('f1'), "id 绑定为方法名"
    assert c.vars.get('args') == (), "args 为空序列"
    assert c.vars.get('sender') == Addr('Owner'), "sender 为调用者"

    print("  [OK] 测试通过\n")


def test_duplicate_contract_address():
    """测试重复声明的合约地址是程序错误"""
    print("测试 8: 重复地址...")

    program = COUNTER.program()
    broken = replace(program, contracts=program.contracts + program.contracts[:1])
    try:
        elaborate_declarations(broken)
        raise AssertionError("重复地址应被拒绝")
    except ProgramError as e:
        assert not isinstance(e, StuckError), "不是执行卡住"
        print(f"  [OK] {e}")

    print("  [OK] 测试通过\n")


def run_all_tests():
    """运行所有测试"""
    print("\n")
    print("╔" + "═" * 58 + "╗")
    print("║" + " " * 16 + "非类型化语义测试套件" + " " * 22 + "║")
    print("╚" + "═" * 58 + "╝")
    print("\n")

    try:
        test_counter()
        test_proxy_forwarding()
        test_pmw_attack()
        test_loops_and_let()
        test_transfer_and_throw()
        test_stuck_and_budget()
        test_fcall_binds_id_and_args()
        test_duplicate_contract_address()

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
