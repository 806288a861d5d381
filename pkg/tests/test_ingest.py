import io

import pytest
from hypothesis import given, strategies as st

from settleflow.core import Transaction, dollars, validate
from settleflow.ingest import ParseError, iter_transactions, parse_transactions, read_file, write_file, \
    write_transactions

HEADER = "day,source,destination,value_cents\n"


def test_parse_single_row():
    week = parse_transactions(HEADER + "0,A,B,100000000\n")
    assert week.transactions() == [Transaction(0, "A", "B", dollars(1e6))]
    assert week.banks == {"A", "B"}
    assert validate(week) == []


def test_parse_self_loop_error():
    with pytest.raises(ParseError, match="self-loop") as err:
        parse_transactions(HEADER + "0,A,A,5\n")
    assert err.value.line == 2


@pytest.mark.parametrize("row, message", [
    ("0,A,B,0", "non-positive"),
    ("0,A,B,-5", "non-positive"),
    ("7,A,B,5", "out of range"),
    ("-1,A,B,5", "out of range"),
    ("x,A,B,5", "malformed day"),
    ("0,A,B,1.5", "malformed value"),
    ("0,A,B", "columns"),
    ("0,A,B,5,extra", "columns"),
    ("0,,B,5", "empty bank"),
])
def test_parse_errors_carry_line_number(row, message):
    with pytest.raises(ParseError, match=message) as err:
        parse_transactions(HEADER + "0,A,B,1\n" + row + "\n")
    assert str(err.value).startswith("line 3:")


def test_parse_rejects_bad_header():
    with pytest.raises(ParseError, match="header"):
        parse_transactions("day,src,dst,value\n0,A,B,1\n")
    with pytest.raises(ParseError, match="header"):
        parse_transactions("")


def test_parse_materialises_days():
    week = parse_transactions(HEADER + "3,A,B,5\n")
    assert week.n_days == 4
    assert all(d == () for d in week.days[:3])


def test_write_empty_week():
    assert write_transactions(parse_transactions(HEADER)) == HEADER


def test_write_one_row_and_determinism():
    week = parse_transactions(HEADER + "0,A,B,7\n")
    out = write_transactions(week)
    assert out == HEADER + "0,A,B,7\n"
    assert write_transactions(week) == out


def test_write_sorted_canonical_order():
    text = HEADER + "1,A,B,5\n0,C,A,9\n0,A,C,9\n0,A,C,3\n"
    assert write_transactions(parse_transactions(text)) == HEADER + "0,A,C,3\n0,A,C,9\n0,C,A,9\n1,A,B,5\n"


def test_write_to_stream_uses_lf():
    buf = io.StringIO(newline="")
    assert write_transactions(parse_transactions(HEADER + "0,A,B,1\n"), buf) is None
    assert "\r" not in buf.getvalue()


rows = st.lists(
    st.tuples(st.integers(0, 6), st.sampled_from(["A", "B", "C", "BP"]),
              st.sampled_from(["A", "B", "C", "BP"]), st.integers(1, 10**13)),
    max_size=30,
).map(lambda rs: [r for r in rs if r[1] != r[2]])


@given(rows)
def test_round_trip_up_to_row_order(rs):
    text = HEADER + "".join(f"{d},{s},{t},{v}\n" for d, s, t, v in rs)
    week = parse_transactions(text)
    out = write_transactions(week)
    assert sorted(out.splitlines()[1:]) == sorted(text.splitlines()[1:])
    assert parse_transactions(out) == week


def test_iter_is_lazy():
    def lines():
        yield HEADER
        yield "0,A,B,1\n"
        raise AssertionError("read past the first row")

    class Stream:
        def __iter__(self):
            return lines()

    first = next(iter(iter_transactions(Stream())))
    assert first == Transaction(0, "A", "B", 1)


def test_file_round_trip(tmp_path):
    week = parse_transactions(HEADER + "0,A,B,1\n1,B,A,2\n")
    path = tmp_path / "w.csv"
    write_file(week, path)
    assert read_file(path) == week
    assert path.read_bytes().count(b"\n") == 3
