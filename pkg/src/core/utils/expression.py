#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
系数表达式 - 词法校验（行列号定位）+ sympy 解析 + numpy 求值

语法：
    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | primary
    primary := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

词法校验只负责在交给 sympy 之前给出带列号的错误；表达式树由
sympy_parser.parse_expr 构建，求值用 sympy.lambdify 生成 numpy 函数。
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import sympy
from sympy.parsing import sympy_parser

from src.core.exceptions import ConfigError

# 设置日志
logger = logging.getLogger(__name__)

X, Y = sympy.symbols("x y", real=True)
VARIABLES = ("x", "y")
CONSTANTS = ("pi", "e")
# 函数名 -> 参数个数
ARITY = {"sin": 1, "cos": 1, "exp": 1, "ln": 1, "abs": 1, "min": 2, "max": 2, "pow": 2}
OPERATORS = "+-*/"

# min/max 用未定义函数表示，lambdify 时映射到逐元素的 numpy 实现
_MINIMUM = sympy.Function("minimum")
_MAXIMUM = sympy.Function("maximum")

LOCAL_DICT = {
    "x": X,
    "y": Y,
    "pi": sympy.pi,
    "e": sympy.E,
    "sin": sympy.sin,
    "cos": sympy.cos,
    "exp": sympy.exp,
    "ln": sympy.log,
    "abs": sympy.Abs,
    "min": _MINIMUM,
    "max": _MAXIMUM,
    "pow": sympy.Pow,
}
LAMBDIFY_MODULES = [{"minimum": np.minimum, "maximum": np.maximum}, "numpy"]


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int


@dataclass
class _Frame:
    """未闭合的括号"""

    pos: int
    func: Optional[Token] = None
    args: int = 1
    has_variable: bool = False


class Tokenizer:
    """表达式词法分析器"""

    def __init__(self, text: str, line: Optional[int] = None, column_offset: int = 0):
        self.text = text
        self.pos = 0
        self.line = line
        self.column_offset = column_offset

    def error(self, message: str, pos: int) -> ConfigError:
        return ConfigError(message, line=self.line, column=self.column_offset + pos + 1)

    def ch(self, pos: Optional[int] = None) -> Optional[str]:
        pos = self.pos if pos is None else pos
        return self.text[pos] if 0 <= pos < len(self.text) else None

    def tokenize(self) -> List[Token]:
        tokens = []
        while True:
            token = self.next()
            tokens.append(token)
            if token.kind == "end":
                return tokens

    def next(self) -> Token:
        while self.ch() is not None and self.ch().isspace():
            self.pos += 1
        ch = self.ch()
        if ch is None:
            return Token("end", "", self.pos)
        if ch in "(),":
            self.pos += 1
            return Token(ch, ch, self.pos - 1)
        if ch in OPERATORS:
            self.pos += 1
            return Token("op", ch, self.pos - 1)
        if ch.isdigit() or ch == ".":
            return self.tokenize_number()
        if ch.isalpha() or ch == "_":
            return self.tokenize_identifier()
        raise self.error(f"无法识别的字符 '{ch}'", self.pos)

    def tokenize_number(self) -> Token:
        start = self.pos
        while self.ch() is not None and (self.ch().isdigit() or self.ch() == "."):
            self.pos += 1
        if self.ch() in ("e", "E") and (
            (self.ch(self.pos + 1) or "").isdigit()
            or (self.ch(self.pos + 1) in ("+", "-") and (self.ch(self.pos + 2) or "").isdigit())
        ):
            self.pos += 2
            while self.ch() is not None and self.ch().isdigit():
                self.pos += 1
        text = self.text[start:self.pos]
        try:
            float(text)
        except ValueError:
            raise self.error(f"无效的数字 '{text}'", start)
        return Token("number", text, start)

    def tokenize_identifier(self) -> Token:
        start = self.pos
        while self.ch() is not None and (self.ch().isalnum() or self.ch() == "_"):
            self.pos += 1
        return Token("name", self.text[start:self.pos], start)


def validate_tokens(tokenizer: Tokenizer) -> List[Tuple[Token, str]]:
    """
    按语法逐个检查记号，错误定位到出错字符

    Returns:
        常数参数的 ln 调用：[(ln 记号, 参数原文)]
    """
    tokens = tokenizer.tokenize()
    if tokens[0].kind == "end":
        raise tokenizer.error("表达式为空", 0)

    stack: List[_Frame] = []
    constant_logs: List[Tuple[Token, str]] = []
    expect_operand = True
    i = 0
    while True:
        token = tokens[i]
        if expect_operand:
            if token.kind == "number":
                expect_operand = False
            elif token.kind == "name":
                if tokens[i + 1].kind == "(":
                    if token.text not in ARITY:
                        raise tokenizer.error(f"未知的函数 '{token.text}'", token.pos)
                    stack.append(_Frame(tokens[i + 1].pos, func=token))
                    i += 1
                elif token.text in VARIABLES:
                    for frame in stack:
                        frame.has_variable = True
                    expect_operand = False
                elif token.text in CONSTANTS:
                    expect_operand = False
                elif token.text in ARITY:
                    raise tokenizer.error(f"函数 {token.text} 缺少参数列表", token.pos)
                else:
                    raise tokenizer.error(f"未知的变量 '{token.text}'", token.pos)
            elif token.kind == "(":
                stack.append(_Frame(token.pos))
            elif token.kind == "op" and token.text in "+-":
                pass
            else:
                found = "表达式结尾" if token.kind == "end" else f"'{token.text}'"
                raise tokenizer.error(f"此处期望操作数，遇到 {found}", token.pos)
        else:
            if token.kind == "op":
                expect_operand = True
            elif token.kind == ")":
                if not stack:
                    raise tokenizer.error("多余的 ')'", token.pos)
                frame = stack.pop()
                if frame.func is not None:
                    arity = ARITY[frame.func.text]
                    if frame.args != arity:
                        raise tokenizer.error(
                            f"函数 {frame.func.text} 需要 {arity} 个参数，收到 {frame.args} 个", frame.func.pos
                        )
                    if frame.func.text == "ln" and not frame.has_variable:
                        constant_logs.append((frame.func, tokenizer.text[frame.pos + 1:token.pos]))
            elif token.kind == ",":
                if not stack or stack[-1].func is None:
                    raise tokenizer.error("多余的 ','", token.pos)
                stack[-1].args += 1
                expect_operand = True
            elif token.kind == "end":
                if stack:
                    # 括号未闭合时报告左括号位置
                    raise tokenizer.error("括号未闭合", stack[-1].pos)
                return constant_logs
            else:
                raise tokenizer.error(f"多余的 '{token.text}'", token.pos)
        i += 1


def _sympify(text: str) -> sympy.Expr:
    return sympy_parser.parse_expr(text, local_dict=LOCAL_DICT, evaluate=False)


def _compile(expr: sympy.Expr) -> Callable:
    return sympy.lambdify((X, Y), expr, modules=LAMBDIFY_MODULES)


@dataclass(frozen=True)
class Expression:
    """已解析的表达式，保留原文以便导出"""

    text: str
    tree: sympy.Expr
    func: Callable = field(compare=False, repr=False)

    @property
    def variables(self) -> set:
        return {symbol.name for symbol in self.tree.free_symbols}

    @property
    def is_constant(self) -> bool:
        return not self.variables

    def evaluate(self, x: Union[float, np.ndarray] = 0.0, y: Union[float, np.ndarray] = 0.0) -> np.ndarray:
        with np.errstate(all="ignore"):
            try:
                return np.asarray(self.func(x, y), dtype=float)
            except (ZeroDivisionError, OverflowError):
                # 纯 Python 标量运算（如常数 1/0）不走 numpy 的 inf 语义
                return np.asarray(np.nan)

    def evaluate_on(self, points: np.ndarray, where: str = "") -> np.ndarray:
        """
        在网格点 (size, dim) 上求值

        Raises:
            ConfigError: 出现非有限值（携带见证节点）
        """
        x = points[:, 0]
        y = points[:, 1] if points.shape[1] > 1 else np.zeros_like(x)
        values = np.broadcast_to(self.evaluate(x, y), x.shape).astype(float)
        bad = ~np.isfinite(values)
        if np.any(bad):
            node = int(np.argmax(bad))
            raise ConfigError(
                f"表达式 '{self.text}' 在网格上取到非有限值",
                key=where or None,
                witness={"node": node, "point": points[node].tolist()},
            )
        return values

    def __str__(self) -> str:
        return self.text


def parse_expression(text: Union[str, int, float], line: Optional[int] = None, column_offset: int = 0) -> Expression:
    """
    解析表达式字符串（数字直接视为常数表达式）

    Raises:
        ConfigError: 语法错误（带行列号）或 ln 的常数参数非正
    """
    if isinstance(text, bool):
        raise ConfigError(f"表达式不能是布尔值: {text}", line=line)
    if isinstance(text, (int, float)):
        text = repr(float(text))
    if not isinstance(text, str):
        raise ConfigError(f"表达式必须是字符串或数字，收到 {type(text).__name__}", line=line)

    tokenizer = Tokenizer(text, line, column_offset)
    constant_logs = validate_tokens(tokenizer)
    for token, argument in constant_logs:
        with np.errstate(all="ignore"):
            value = float(_compile(_sympify(argument))(0.0, 0.0))
        if not value > 0:
            raise tokenizer.error(f"ln 的常数参数非正 ({value:g})", token.pos)

    try:
        tree = _sympify(text)
    except (SyntaxError, TypeError, ValueError) as e:
        raise ConfigError(f"表达式 '{text}' 无法解析: {e}", line=line, column=column_offset + 1)
    logger.debug(f"表达式 '{text}' -> {tree}")
    return Expression(text, tree, _compile(tree))
