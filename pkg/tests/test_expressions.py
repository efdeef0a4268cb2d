"""Equation grammar: precedence, conditionals, builtins, error positions."""
import pytest

from stockflow import parse_expression
from stockflow.errors import ExpressionError
from stockflow.ir import Binary, Call, Cond, Num, Ref, TimeRef, Unary


def test_multiplication_binds_tighter_than_addition():
    assert parse_expression("a * b + c") == Binary(
        "+", Binary("*", Ref("a"), Ref("b")), Ref("c"))


def test_conditional_over_time():
    expr = parse_expression("IF TIME > 5 THEN 1 ELSE 0")
    assert expr == Cond(Binary(">", TimeRef(), Num(5.0)), Num(1.0), Num(0.0))


def test_unary_minus_binds_looser_than_power():
    # matches the prevailing tool convention: -x^2 is -(x^2)
    assert parse_expression("-x^2") == Unary("-", Binary("^", Ref("x"), Num(2.0)))


def test_power_is_left_associative():
    assert parse_expression("a ^ b ^ c") == Binary(
        "^", Binary("^", Ref("a"), Ref("b")), Ref("c"))


def test_signed_exponent():
    assert parse_expression("2 ^ -3") == Binary("^", Num(2.0), Unary("-", Num(3.0)))


def test_unary_minus_binds_tighter_than_multiplication():
    assert parse_expression("-a * b") == Binary("*", Unary("-", Ref("a")), Ref("b"))


def test_comparisons_bind_looser_than_arithmetic():
    expr = parse_expression("1 + 2 * 3 < 7 AND x")
    assert expr == Binary(
        "and",
        Binary("<", Binary("+", Num(1.0), Binary("*", Num(2.0), Num(3.0))), Num(7.0)),
        Ref("x"))


def test_or_binds_loosest():
    expr = parse_expression("a AND b OR c")
    assert expr == Binary("or", Binary("and", Ref("a"), Ref("b")), Ref("c"))


def test_not_and_inequality():
    assert parse_expression("NOT a <> b") == Unary(
        "not", Binary("<>", Ref("a"), Ref("b")))
    assert parse_expression("a != b") == Binary("<>", Ref("a"), Ref("b"))


def test_builtins_case_insensitive():
    assert parse_expression("max(a, b)") == parse_expression("MAX(A, B)")
    assert parse_expression("SafeDiv(x, y, 1)") == Call(
        "safediv", (Ref("x"), Ref("y"), Num(1.0)))


def test_bare_time_keywords():
    assert parse_expression("TIME") == TimeRef()
    assert parse_expression("TIME()") == TimeRef()
    assert parse_expression("DT * 2") == Binary("*", Call("dt", ()), Num(2.0))
    assert parse_expression("STARTTIME") == Call("starttime", ())


def test_quoted_names_normalize():
    assert parse_expression('"Electric Cars" + 1') == Binary(
        "+", Ref("electric_cars"), Num(1.0))


def test_scientific_notation():
    assert parse_expression("1.5e3") == Num(1500.0)
    assert parse_expression("2E-2") == Num(0.02)


def test_comments_are_stripped_offsets_preserved():
    assert parse_expression("a {comment here} + b") == Binary("+", Ref("a"), Ref("b"))
    with pytest.raises(ExpressionError) as err:
        parse_expression("a {note} + ?")
    assert err.value.offset == 11


def test_unknown_function_rejected():
    with pytest.raises(ExpressionError) as err:
        parse_expression("FROBNICATE(x)")
    assert err.value.code == "unknown_builtin"


def test_arity_checked_at_parse_time():
    with pytest.raises(ExpressionError) as err:
        parse_expression("MIN(1)")
    assert "arguments" in str(err.value)
    with pytest.raises(ExpressionError):
        parse_expression("STEP(1, 2, 3)")
    with pytest.raises(ExpressionError):
        parse_expression("SAFEDIV(1)")


def test_array_subscripts_rejected_with_code():
    with pytest.raises(ExpressionError) as err:
        parse_expression("stock[region]")
    assert err.value.code == "unsupported_arrays"


def test_syntax_error_carries_offset():
    with pytest.raises(ExpressionError) as err:
        parse_expression("a + * b")
    assert err.value.offset == 4
    with pytest.raises(ExpressionError) as err:
        parse_expression("(a + b")
    assert isinstance(err.value.offset, int)


def test_trailing_input_rejected():
    with pytest.raises(ExpressionError):
        parse_expression("a b")


def test_nested_conditionals():
    expr = parse_expression("IF a THEN IF b THEN 1 ELSE 2 ELSE 3")
    assert expr == Cond(Ref("a"), Cond(Ref("b"), Num(1.0), Num(2.0)), Num(3.0))


def test_parse_determinism():
    text = "IF x > 0 THEN SAFEDIV(a, b) ELSE -y^2 {fallback}"
    assert parse_expression(text) == parse_expression(text)
