"""
配置类

所有可调参数集中在这里，以 dataclass 表示；随机过程统一通过
np.random.default_rng(seed) 获得可复现的随机流。
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class SearchBudget:
    """类型解释集合构建预算"""
    max_triplets: int = 10000   # 最多访问的三元组数
    max_depth: int = 200        # BFS 最大深度
    max_realizations: int = 4096  # 单步枚举的状态实现上限，超出则按两分支过近似


@dataclass
class RunConfig:
    """执行配置"""
    max_steps: int = 5000
    typed: bool = False
    level: Optional[str] = None          # 类型化执行的初始安全级别，默认取格底
    assert_preservation: bool = False    # 每步断言运行时保持性


@dataclass
class CIConfig:
    """调用完整性差分测试配置"""
    mutations: int = 50
    seed: int = 7
    max_steps: int = 5000
    max_body_len: int = 5       # 变异方法体的最大语句数

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass
class TheoremConfig:
    """随机化定理测试配置"""
    instances: int = 200
    seed: int = 0
    max_attempts: int = 0        # 0 表示 instances * 10；跳过的实例不计入 instances
    ni_pairs: int = 500          # 非干扰检查的最少配对数

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass
class ServerConfig:
    """REST 服务配置"""
    host: str = '0.0.0.0'
    port: int = 8080
    debug: bool = False
    ledger_path: str = 'ledger.jsonl'
