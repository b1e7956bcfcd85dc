"""
问题文件解析、校验与导出测试
"""

import os
import textwrap

import numpy as np
import pytest

from src.core.exceptions import ConfigError
from pucci_app.utils.config_manager import build_problem, export_config, load_config, parse_config

BASE = textwrap.dedent(
    """\
    name: base
    domain:
      dim: 1
      extents: [0, 1]
      resolution: 9
    operators:
      - kind: linear
    gradient:
      - mu: 1
    coupling: 1
    rhs: -0.1
    """
)

NEGATIVE_COUPLING = textwrap.dedent(
    """\
    name: neg
    domain:
      dim: 1
      extents: [0, 1]
      resolution: 9
    operators:
      - kind: linear
      - kind: linear
    coupling:
      - [1, -1]
      - [0, 1]
    rhs: [-0.1, -0.1]
    """
)


@pytest.mark.parametrize("name", ["lap", "diag10", "pucci", "system2", "fold", "scan", "bellman2d"])
def test_shipped_problem_files_load(config_dir, name):
    document = load_config(os.path.join(config_dir, f"{name}.yml"))
    p = build_problem(document)
    assert p.n == document.n
    assert p.rhs.shape == (document.n, p.grid.size)
    assert p.lam == pytest.approx(document.run.get("lambda", 0.0))


def test_export_round_trip(config_dir):
    for name in ("system2", "bellman2d"):
        document = load_config(os.path.join(config_dir, f"{name}.yml"))
        again = parse_config(export_config(document))
        assert again.to_dict() == document.to_dict()
        first, second = build_problem(document), build_problem(again)
        assert np.array_equal(first.rhs, second.rhs)
        assert np.array_equal(first.coupling.entries, second.coupling.entries)


def test_scalar_shorthand_and_defaults():
    document = parse_config(BASE)
    assert document.n == 1
    assert document.resolution == (9,)
    p = build_problem(document, lam=0.3, gamma=2.0)
    assert p.lam == 0.3 and p.gamma == 2.0
    assert np.allclose(p.rhs, -0.1)
    assert p.gradient.mu1 == pytest.approx(1.0)

    without_gradient = parse_config(BASE.replace("gradient:\n  - mu: 1\n", ""))
    assert build_problem(without_gradient).gradient.mu2 == 0.0


def test_negative_coupling_reports_entry():
    with pytest.raises(ConfigError) as info:
        parse_config(NEGATIVE_COUPLING)
    error = info.value
    assert error.key == "coupling[1][2]"
    assert error.line == 10
    assert error.witness["value"] == -1.0
    assert "node" in error.witness


def test_expression_error_column_inside_yaml():
    text = BASE.replace("rhs: -0.1", 'rhs: "sin(pi*x"')
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == 11
    # 左括号在该行第 10 列
    assert info.value.column == 10
    assert info.value.key == "rhs"


@pytest.mark.parametrize(
    "old, new, key",
    [
        ("rhs: -0.1", "rhs: -0.1\nbogus: 1", "bogus"),
        ("  dim: 1", "  dim: 3", "domain.dim"),
        ("  - kind: linear", "  - kind: spectral", "operators[1].kind"),
        ("rhs: -0.1", "rhs: -0.1\nrun:\n  lambda: fast", "run.lambda"),
        ("rhs: -0.1", "rhs: -0.1\nrun:\n  colour: red", "run.colour"),
        ("  - kind: linear", "  - kind: pucci_plus\n    lam: 2\n    Lam: 1", "operators[1]"),
    ],
)
def test_semantic_errors_name_the_key(old, new, key):
    with pytest.raises(ConfigError) as info:
        parse_config(BASE.replace(old, new))
    assert info.value.key == key
    assert info.value.line is not None


def test_missing_section_and_yaml_syntax():
    with pytest.raises(ConfigError) as info:
        parse_config(BASE.replace("rhs: -0.1\n", ""))
    assert info.value.key == "rhs"

    with pytest.raises(ConfigError) as info:
        parse_config(BASE.replace("extents: [0, 1]", "extents: [0, 1"))
    assert info.value.line is not None

    with pytest.raises(ConfigError):
        parse_config("- just\n- a list\n")


def test_values_file_escape_hatch(tmp_path):
    values = np.linspace(0.0, 1.0, 11)
    np.savetxt(tmp_path / "c.txt", values)
    config = tmp_path / "problem.yml"
    config.write_text(BASE.replace("coupling: 1", "coupling:\n  values_file: c.txt"), encoding="utf-8")
    p = build_problem(load_config(config))
    assert np.allclose(p.coupling.entries[0, 0], values)

    config.write_text(BASE.replace("coupling: 1", "coupling:\n  values_file: missing.txt"), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(config)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/problem.yml")
