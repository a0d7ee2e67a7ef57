"""
TinySol 工具链的异常层级

判定类操作（类型检查、一致性、解释验证）返回布尔结果 + 诊断；
只有非法输入（配置、语法、结构）才抛出这里定义的异常。
"""

from typing import Optional


class TinySolError(Exception):
    """所有 TinySol 错误的根类"""


class LatticeError(TinySolError):
    """安全格配置错误：未声明的级别、非偏序、缺少上下确界"""


class ParseError(TinySolError):
    """词法/语法错误，带行列号"""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"{message} (行 {line}, 列 {column})" if line else message)


class ProgramError(TinySolError):
    """程序层面的静态错误：缺少 balance/send/fallback、重名、未声明的接口"""


class ConsistencyError(TinySolError):
    """Σ/Γ 不一致或环境不一致"""


class StuckError(TinySolError):
    """非类型化语义卡住（非终止、无可用规则）"""


class TypedStuckError(TinySolError):
    """类型化语义卡住：记录违背的规则名与侧条件"""

    def __init__(self, rule: str, condition: str):
        self.rule = rule
        self.condition = condition
        super().__init__(f"{rule}: {condition}")


class StructuralError(TinySolError):
    """finish / merge 等辅助函数遇到结构不匹配的栈"""


class CertificateError(TinySolError):
    """证书格式错误或哈希不匹配"""


class LedgerError(TinySolError):
    """账本文件损坏或追加被拒绝"""

    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        super().__init__(message if index is None else f"条目 {index}: {message}")
