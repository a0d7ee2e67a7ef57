"""
共享 TinySol 语料：代理模式、PMW 攻击变体、组合代理、id 分派以及十个小程序

每个条目给出合约文本、接口文本、格文本与若干交易；测试、演示脚本、CLI 与 REST
服务都从这里取样例程序。
"""

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from lattice_types import Addr
from tinysol_syntax import Call, Program, parse_program, parse_transaction

SINGLE_LEVEL = "lattice { levels: L; top: L; bottom: L; }"
TWO_POINT = "lattice { levels: L, H; order: L <= H; top: H; bottom: L; }"


@dataclass(frozen=True)
class CorpusProgram:
    """语料条目；transactions 为交易文件文本"""
    name: str
    source: str
    interfaces: str = ''
    lattice: str = ''
    transactions: Tuple[str, ...] = ()
    description: str = ''

    def program(self) -> Program:
        return parse_program(self.source, self.interfaces, self.lattice)

    def transaction(self, index: int = 0, program: Program = None) -> List[Tuple[Addr, Call]]:
        return parse_transaction(self.transactions[index], program or self.program())

    def as_dict(self) -> Dict[str, object]:
        return {'name': self.name, 'description': self.description, 'source': self.source,
                'interfaces': self.interfaces, 'lattice': self.lattice,
                'transactions': list(self.transactions)}


# =============================================================================
# 1. 代理（pointer-to-implementation）
# =============================================================================

PROXY_INTERFACES = """
interface IX {
  balance : int@L;
  count : int@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
  f1 : () -> cmd@L;
  f2 : () -> cmd@L;
  f3 : () -> cmd@L;
}

interface IP {
  balance : int@L;
  owner : Itop@L;
  impl : IX@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
  update : (IX@L) -> cmd@L;
}

interface IA {
  balance : int@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
}
"""

PROXY_SOURCE = """
contract Proxy : IP@L {
  field balance := 0;
  field owner := Owner;
  field impl := X;
  func send() { skip }
  func update(x) { if sender = this.owner then this.impl := x else skip }
  func fallback() { call this.impl.id()$value }
}

contract X : IX@L {
  field balance := 0;
  field count := 0;
  func send() { skip }
  func f1() { this.count := 1 }
  func f2() { this.count := this.count + 2 }
  func f3() { if this.count < 3 then this.count := 3 else skip }
  func fallback() { skip }
}

contract Owner : IA@L {
  field balance := 10;
  func send() { skip }
  func fallback() { skip }
}
"""

PROXY = CorpusProgram(
    'proxy', PROXY_SOURCE, PROXY_INTERFACES, SINGLE_LEVEL,
    ("Owner CALL Proxy.f1()$0\nOwner CALL Proxy.f2()$1\nOwner CALL Proxy.nothing()$0\n",),
    "fallback 通过 id 把所有未声明的调用转发给实现合约 X",
)

CLIENT_INTERFACES = """
interface IC {
  balance : int@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
  go : () -> cmd@L;
}
"""

# 调用 Proxy 上未声明的方法 g，只能经由 st-fcall 与 Proxy 的 fallback 证书类型化
CLIENT_SOURCE = """
contract Client : IC@L {
  field balance := 0;
  func send() { skip }
  func go() { call Proxy.g()$0 }
  func fallback() { skip }
}
"""

# 只调用已声明的方法，普通 st-call 即可
CLIENT_DECLARED_SOURCE = """
contract Client : IC@L {
  field balance := 0;
  func send() { skip }
  func go() { call Proxy.update(X)$0 }
  func fallback() { skip }
}
"""

CLIENT = CorpusProgram('client', PROXY_SOURCE + CLIENT_SOURCE, PROXY_INTERFACES + CLIENT_INTERFACES,
                       SINGLE_LEVEL, ("Owner CALL Client.go()$0\n",), "调用 Proxy.g 的客户端")
CLIENT_DECLARED = CorpusProgram('client-declared', PROXY_SOURCE + CLIENT_DECLARED_SOURCE,
                                PROXY_INTERFACES + CLIENT_INTERFACES, SINGLE_LEVEL,
                                ("Owner CALL Client.go()$0\n",), "只调用已声明方法的客户端")


# =============================================================================
# 2. PMW：fallback 改为委托调用，实现合约带 init
# =============================================================================

PMW_INTERFACES = """
interface IX {
  balance : int@L;
  owner : Itop@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
  init : (Itop@L) -> cmd@L;
  f1 : () -> cmd@L;
}

interface IP {
  balance : int@L;
  owner : Itop@L;
  impl : IX@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
  update : (IX@L) -> cmd@L;
  pay : () -> cmd@L;
}

interface IA {
  balance : int@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
}
"""

PMW_SOURCE = """
contract Proxy : IP@L {
  field balance := 100;
  field owner := Owner;
  field impl := X;
  func send() { skip }
  func update(x) { if sender = this.owner then this.impl := x else skip }
  func pay() { if sender = this.owner then call this.owner.send()$this.balance else skip }
  func fallback() { dcall this.impl.id(args) }
}

contract X : IX@L {
  field balance := 0;
  field owner := Owner;
  func send() { skip }
  func init(x) { this.owner := x }
  func f1() { skip }
  func fallback() { skip }
}

contract Owner : IA@L {
  field balance := 0;
  func send() { skip }
  func fallback() { skip }
}

contract Attacker : IA@L {
  field balance := 0;
  func send() { skip }
  func fallback() { skip }
}
"""

PMW = CorpusProgram(
    'pmw', PMW_SOURCE, PMW_INTERFACES, SINGLE_LEVEL,
    ("Attacker CALL Proxy.init(Attacker)$0\nAttacker CALL Proxy.pay()$0\n",),
    "委托调用 fallback + init：攻击者接管 owner 并转走余额",
)


# =============================================================================
# 3. 组合代理：显式委托转发 f_i，其余调用经 fallback 直接转发
# =============================================================================

COMBINED_INTERFACES = """
interface IX {
  balance : int@L;
  count : int@L;
  owner : Itop@L;
  impl : IX@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
  f1 : (int@L) -> cmd@L;
  f2 : (int@L) -> cmd@L;
}

interface IP extends IX {
  balance : int@L;
  count : int@L;
  owner : Itop@L;
  impl : IX@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
  f1 : (int@L) -> cmd@L;
  f2 : (int@L) -> cmd@L;
}

interface IE {
  balance : int@H;
  total : int@H;
  send : () -> cmd@L;
  fallback : () -> cmd@H;
  g : (int@H) -> cmd@H;
  h : () -> cmd@H;
}

interface IU {
  balance : int@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
}
"""

COMBINED_SOURCE = """
contract Proxy : IP@L {
  field balance := 0;
  field count := 0;
  field owner := User;
  field impl := X;
  func send() { skip }
  func f1(x) { dcall this.impl.f1(x) }
  func f2(x) { dcall this.impl.f2(x) }
  func fallback() { call this.impl.id(args)$0 }
}

contract X : IX@L {
  field balance := 0;
  field count := 0;
  field owner := User;
  field impl := X;
  func send() { skip }
  func f1(x) { this.count := x }
  func f2(x) { this.count := this.count + x }
  func fallback() { skip }
}

contract Ext : IE@H {
  field balance := 0;
  field total := 0;
  func send() { skip }
  func g(x) { this.total := this.total + x }
  func h() { skip }
  func fallback() { skip }
}

contract User : IU@L {
  field balance := 5;
  func send() { skip }
  func fallback() { skip }
}
"""

COMBINED_PROXY = CorpusProgram(
    'combined-proxy', COMBINED_SOURCE, COMBINED_INTERFACES, TWO_POINT,
    ("User CALL Proxy.f1(5)$0\nUser CALL Proxy.f2(2)$0\nUser CALL Proxy.extra(4)$0\n",
     "User CALL Proxy.f1(5)$0\nUser CALL Ext.g(3)$0\nUser CALL Proxy.f2(2)$0\nUser CALL Proxy.extra()$0\n"),
    "代理显式委托 f1/f2，其余调用经 fallback 以普通调用转发；Ext 为不可信扩展",
)


# =============================================================================
# 4. id 分派（h = 3）
# =============================================================================

ID_DISPATCH_HANDLERS = 3

ID_DISPATCH_INTERFACES = """
interface IX {
  balance : int@L;
  count : int@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
  f0 : () -> cmd@L;
  f1 : () -> cmd@L;
  f2 : () -> cmd@L;
  f3 : () -> cmd@L;
}

interface IY {
  balance : int@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
}
"""

ID_DISPATCH_SOURCE = """
contract X : IX@L {
  field balance := 0;
  field count := 0;
  func send() { skip }
  func f0() { this.count := 0 }
  func f1() { this.count := 1 }
  func f2() { this.count := 2 }
  func f3() { this.count := 3 }
  func fallback() { skip }
}

contract Y : IY@L {
  field balance := 0;
  func send() { skip }
  func fallback() {
    if id = f1 or id = f2 or id = f3 then call X.id()$value else call X.f0()$value
  }
}
"""

ID_DISPATCH = CorpusProgram(
    'id-dispatch', ID_DISPATCH_SOURCE, ID_DISPATCH_INTERFACES, '',
    ("X CALL Y.f2()$0\nX CALL Y.other()$0\n",),
    "fallback 按 id 分派到 f1..f3，其余落到默认处理器 f0",
)


# =============================================================================
# 5. 十个程序的语料库（均可语法类型化，无递归）
# =============================================================================

_USER_INTERFACE = """
interface IUser {
  balance : int@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
}
"""

_USER = """
contract User : IUser@L {
  field balance := 5;
  func send() { skip }
  func fallback() { skip }
}
"""

_COUNTER_INTERFACE = """
interface ICounter {
  balance : int@L;
  n : int@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
  inc : () -> cmd@L;
  add : (int@L) -> cmd@L;
}
"""

_COUNTER = """
contract Counter : ICounter@L {
  field balance := 0;
  field n := 0;
  func send() { skip }
  func inc() { this.n := this.n + 1 }
  func add(k) { this.n := this.n + k }
  func fallback() { skip }
}
"""

COUNTER = CorpusProgram(
    'counter', _COUNTER + _USER, _COUNTER_INTERFACE + _USER_INTERFACE, '',
    ("User CALL Counter.inc()$0\nUser CALL Counter.add(3)$1\n",),
    "L 级计数器",
)

VAULT = CorpusProgram(
    'vault',
    """
contract Vault : IVault@L {
  field balance := 0;
  field secret := 7;
  field flag := false;
  field visits := 0;
  func send() { skip }
  func store(k) { this.secret := k }
  func check() {
    this.visits := this.visits + 1;
    if this.secret < 10 then this.flag := true else this.flag := false
  }
  func fallback() { skip }
}
""" + _USER,
    """
interface IVault {
  balance : int@L;
  secret : int@H;
  flag : bool@H;
  visits : int@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
  store : (int@H) -> cmd@L;
  check : () -> cmd@L;
}
""" + _USER_INTERFACE,
    '',
    ("User CALL Vault.store(12)$0\nUser CALL Vault.check()$0\n",),
    "H 条件只写 H 字段",
)

BANK = CorpusProgram(
    'bank',
    """
contract Bank : IBank@L {
  field balance := 0;
  field total := 0;
  func send() { skip }
  func deposit(k) { this.total := this.total + k }
  func accrue() {
    let i : int@L := 0 in while i < 3 do { this.total := this.total + 1; i := i + 1 }
  }
  func fallback() { skip }
}
""" + _USER,
    """
interface IBank {
  balance : int@L;
  total : int@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
  deposit : (int@L) -> cmd@L;
  accrue : () -> cmd@L;
}
""" + _USER_INTERFACE,
    '',
    ("User CALL Bank.deposit(4)$2\nUser CALL Bank.accrue()$0\n",),
    "let 与有界 while",
)

RELAY = CorpusProgram(
    'relay',
    _COUNTER + """
contract Relay : IRelay@L {
  field balance := 0;
  field target := Counter;
  func send() { skip }
  func poke() { call this.target.inc()$0 }
  func pokeTwice() { call this.target.add(2)$0; call Counter.inc()$0 }
  func fallback() { skip }
}
""" + _USER,
    _COUNTER_INTERFACE + """
interface IRelay {
  balance : int@L;
  target : ICounter@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
  poke : () -> cmd@L;
  pokeTwice : () -> cmd@L;
}
""" + _USER_INTERFACE,
    '',
    ("User CALL Relay.poke()$0\nUser CALL Relay.pokeTwice()$0\n",),
    "L 合约之间的调用链",
)

_BIDDER_INTERFACES = """
interface IAuction {
  balance : int@H;
  best : int@H;
  bidder : Itop@H;
  send : () -> cmd@L;
  fallback : () -> cmd@H;
  bid : (int@H) -> cmd@H;
}

interface IBidder {
  balance : int@H;
  send : () -> cmd@L;
  fallback : () -> cmd@H;
  go : () -> cmd@H;
}
"""

AUCTION = CorpusProgram(
    'auction',
    """
contract Auction : IAuction@H {
  field balance := 0;
  field best := 0;
  field bidder := User;
  func send() { skip }
  func bid(x) { if this.best < x then { this.best := x; this.bidder := sender } else skip }
  func fallback() { skip }
}

contract Bidder : IBidder@H {
  field balance := 3;
  func send() { skip }
  func go() { call Auction.bid(5)$0 }
  func fallback() { skip }
}
""" + _COUNTER + _USER,
    _BIDDER_INTERFACES + _COUNTER_INTERFACE + _USER_INTERFACE,
    '',
    ("Bidder CALL Auction.bid(7)$0\nBidder CALL Bidder.go()$0\nUser CALL Counter.inc()$0\n",),
    "H 合约（拍卖）与 L 合约并存，可按级别划分",
)

NOTARY = CorpusProgram(
    'notary',
    """
contract Notary : INotary@L {
  field balance := 0;
  field count := 0;
  func send() { skip }
  func record(x) { this.count := this.count + 1; call Archive.put(x)$0 }
  func fallback() { skip }
}

contract Archive : IArchive@H {
  field balance := 0;
  field last := 0;
  func send() { skip }
  func put(x) { this.last := x }
  func fallback() { skip }
}
""" + _USER,
    """
interface INotary {
  balance : int@H;
  count : int@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
  record : (int@L) -> cmd@L;
}

interface IArchive {
  balance : int@H;
  last : int@H;
  send : () -> cmd@L;
  fallback : () -> cmd@H;
  put : (int@L) -> cmd@H;
}
""" + _USER_INTERFACE,
    '',
    ("User CALL Notary.record(9)$0\n",),
    "L 方法向 H 合约单向写入",
)

ESCROW = CorpusProgram(
    'escrow',
    """
contract Escrow : IEscrow@L {
  field balance := 10;
  field payee := Shop;
  func send() { skip }
  func release(k) { if k <= this.balance then call this.payee.send()$k else skip }
  func fallback() { skip }
}

contract Shop : IShop@L {
  field balance := 0;
  func send() { skip }
  func fallback() { skip }
}
""" + _USER,
    """
interface IEscrow {
  balance : int@L;
  payee : IShop@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
  release : (int@L) -> cmd@L;
}

interface IShop {
  balance : int@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
}
""" + _USER_INTERFACE,
    '',
    ("User CALL Escrow.release(4)$0\nUser CALL Escrow.release(20)$0\n",),
    "带金额的转账",
)

POLL = CorpusProgram(
    'poll',
    """
contract Poll : IPoll@L {
  field balance := 0;
  field yes := 0;
  field no := 0;
  field open := true;
  func send() { skip }
  func vote(b) {
    if this.open and b then this.yes := this.yes + 1
    else if this.open then this.no := this.no + 1 else skip
  }
  func close() { this.open := false }
  func fallback() { skip }
}
""" + _USER,
    """
interface IPoll {
  balance : int@L;
  yes : int@L;
  no : int@L;
  open : bool@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
  vote : (bool@L) -> cmd@L;
  close : () -> cmd@L;
}
""" + _USER_INTERFACE,
    '',
    ("User CALL Poll.vote(true)$0\nUser CALL Poll.vote(false)$0\nUser CALL Poll.close()$0\n"
     "User CALL Poll.vote(true)$0\n",),
    "布尔运算与嵌套 if",
)

WALLET = CorpusProgram(
    'wallet',
    """
contract Wallet : IWallet@L {
  field balance := 0;
  field funds := 5;
  func send() { skip }
  func withdraw(k) { if this.funds < k then throw else this.funds := this.funds - k }
  func topup(k) { if not (k < 0) then this.funds := this.funds + k else skip }
  func fallback() { skip }
}
""" + _USER,
    """
interface IWallet {
  balance : int@L;
  funds : int@L;
  send : () -> cmd@L;
  fallback : () -> cmd@L;
  withdraw : (int@L) -> cmd@L;
  topup : (int@L) -> cmd@L;
}
""" + _USER_INTERFACE,
    '',
    ("User CALL Wallet.topup(2)$0\nUser CALL Wallet.withdraw(3)$0\n",
     "User CALL Wallet.withdraw(9)$0\n"),
    "throw 终止",
)

KEEPER = CorpusProgram(
    'keeper',
    """
contract Keeper : IKeeper@H {
  field balance := 0;
  field seed := 3;
  field acc := 0;
  func send() { skip }
  func mix(x) {
    let t : int@H := x in { while 0 < t do { this.acc := this.acc + this.seed; t := t - 1 } }
  }
  func fallback() { skip }
}

contract Miner : IMiner@H {
  field balance := 0;
  func send() { skip }
  func work() { call Keeper.mix(2)$0 }
  func fallback() { skip }
}
""" + _USER,
    """
interface IKeeper {
  balance : int@H;
  seed : int@H;
  acc : int@H;
  send : () -> cmd@L;
  fallback : () -> cmd@H;
  mix : (int@H) -> cmd@H;
}

interface IMiner {
  balance : int@H;
  send : () -> cmd@L;
  fallback : () -> cmd@H;
  work : () -> cmd@H;
}
""" + _USER_INTERFACE,
    '',
    ("Miner CALL Miner.work()$0\nMiner CALL Keeper.mix(1)$0\n",),
    "H 级循环与局部变量",
)

CORPUS: Tuple[CorpusProgram, ...] = (
    COUNTER, VAULT, BANK, RELAY, AUCTION, NOTARY, ESCROW, POLL, WALLET, KEEPER,
)

EXAMPLES: Tuple[CorpusProgram, ...] = (
    PROXY, CLIENT, CLIENT_DECLARED, PMW, COMBINED_PROXY, ID_DISPATCH,
)


def corpus_by_name() -> Dict[str, CorpusProgram]:
    return {p.name: p for p in CORPUS + EXAMPLES}


def get_corpus_program(name: str) -> CorpusProgram:
    programs = corpus_by_name()
    if name not in programs:
        raise ValueError(f"未知的语料程序: {name}，可选: {sorted(programs)}")
    return programs[name]
