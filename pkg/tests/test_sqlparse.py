import pytest

from sqlifuzz.sqlparse import (
    BinOp,
    Delete,
    Func,
    Ident,
    Insert,
    Like,
    Lit,
    Select,
    SqlSyntaxError,
    SubQuery,
    Update,
    count_unions,
    eval_const,
    has_true_disjunct,
    parse,
    shape,
)


class TestParse:
    def test_select_where(self):
        got = parse("SELECT id, level FROM members WHERE member_login = 'guest'")
        assert len(got.statements) == 1
        stmt = got.statements[0]
        assert isinstance(stmt, Select)
        assert stmt.tables == ("members",)
        assert stmt.where == BinOp("=", Ident("member_login"), Lit("guest", True))

    def test_select_without_from(self):
        stmt = parse("select database()").statements[0]
        assert stmt.items == (Func("database", ()),)

    def test_insert(self):
        stmt = parse(
            "INSERT INTO feedback (member_name, email) VALUES ('a', 'b')"
        ).statements[0]
        assert isinstance(stmt, Insert)
        assert stmt.table == "feedback"
        assert stmt.columns == ("member_name", "email")
        assert stmt.rows == ((Lit("a", True), Lit("b", True)),)

    def test_update_and_delete(self):
        up = parse("update members set level=9 where id=2").statements[0]
        assert isinstance(up, Update)
        assert up.assignments == (("level", Lit("9", False)),)
        de = parse("delete from members where id = 3").statements[0]
        assert isinstance(de, Delete)
        assert de.table == "members"

    def test_multiple_statements(self):
        got = parse("select 1; delete from members; ")
        assert len(got.statements) == 2

    def test_union_chain(self):
        stmt = parse("select a from t union select b from u union all select 1").statements[0]
        assert count_unions(stmt) == 2

    def test_comments_stripped_and_flagged(self):
        got = parse("select 1 -- trailing junk '")
        assert got.had_comment
        got = parse("select/*x*/1")
        assert got.had_comment
        assert not parse("select 1").had_comment
        got = parse("select 1 # more")
        assert got.had_comment

    def test_unterminated_block_comment_swallows_tail(self):
        got = parse("select name from users /* whatever ' AND x='1'")
        assert got.had_comment
        assert len(got.statements) == 1

    def test_string_escapes(self):
        stmt = parse("select 'it''s' from t").statements[0]
        assert stmt.items == (Lit("it's", True),)

    def test_dotted_names(self):
        stmt = parse(
            "select group_concat(schema_name) from information_schema.schemata"
        ).statements[0]
        assert stmt.tables == ("information_schema.schemata",)

    def test_subquery(self):
        stmt = parse("select a from t where 1=(select count(*) from members)").statements[0]
        assert isinstance(stmt.where.right, SubQuery)

    def test_pipes_and_ampersands_are_connectives(self):
        a = parse("select 1 from t where a='x' || 'h'='h'").statements[0]
        b = parse("select 1 from t where a='x' or 'h'='h'").statements[0]
        assert shape(a) == shape(b)
        c = parse("select 1 from t where a=1 && b=2").statements[0]
        d = parse("select 1 from t where a=1 and b=2").statements[0]
        assert shape(c) == shape(d)

    @pytest.mark.parametrize(
        "bad",
        [
            "",
            "select",
            "select 'unterminated",
            "where 1=1",
            "select ? from t",
            "select count(* from t",
            "and 1=(select count(*) from );--",
        ],
    )
    def test_syntax_errors(self, bad):
        with pytest.raises(SqlSyntaxError):
            parse(bad)


class TestShape:
    def test_literal_values_wildcarded(self):
        a = parse("select a from t where b='x' and c=1").statements[0]
        b = parse("select a from t where b='yyy' and c=42").statements[0]
        assert shape(a) == shape(b)

    def test_structure_differs(self):
        a = parse("select a from t where b='x'").statements[0]
        b = parse("select a from t where b='x' or 1=1").statements[0]
        assert shape(a) != shape(b)

    def test_identifiers_not_wildcarded(self):
        a = parse("select a from t").statements[0]
        b = parse("select a from u").statements[0]
        assert shape(a) != shape(b)

    def test_case_insensitive_keywords_and_names(self):
        a = parse("SELECT A FROM T WHERE B=1").statements[0]
        b = parse("select a from t where b=2").statements[0]
        assert shape(a) == shape(b)


class TestEval:
    @pytest.mark.parametrize(
        "expr,expected",
        [
            ("1=1", True),
            ("'1'='1'", True),
            ("8>=56", False),
            ("5<7", True),
            ("2 between 1 and 3", True),
            ("8 between 1 and 3", False),
            ("'l' in ('m','y')", False),
            ("'l' in ('l','y')", True),
            ("'a' like 'a'", True),
            ("'a' like 'b'", False),
            ("'abc' like 'a%'", True),
            ("1+1=2", True),
            ("not 1=1", False),
            ("'1'=1", True),
        ],
    )
    def test_variable_free(self, expr, expected):
        node = parse(f"select 1 from t where {expr}").statements[0].where
        assert eval_const(node) == expected

    def test_column_reference_not_evaluable(self):
        node = parse("select 1 from t where a=1").statements[0].where
        assert eval_const(node) is None


class TestTautologyDetection:
    @pytest.mark.parametrize(
        "sql,expected",
        [
            ("select 1 from t where a='x' or 1=1", True),
            ("select 1 from t where a='x' or '1'='1' and b='y'", True),
            ("select 1 from t where a='x' or 1", True),
            ("select 1 from t where a='x' and b='y'", False),
            ("select 1 from t where a='x' or b='y'", False),
            ("select 1 from t where a='x' and 8=9", False),
            ("select 1 from t where 5 between 1 and 9", True),
            ("select 1 from t where a=1 or not 1=2", True),
            ("select 1 from t", False),
        ],
    )
    def test_cases(self, sql, expected):
        stmt = parse(sql).statements[0]
        assert has_true_disjunct(stmt) is expected

    def test_benign_literals_in_non_boolean_positions_ignored(self):
        stmt = parse("select 1 from t where a=5 order by 'name' limit 3").statements[0]
        assert has_true_disjunct(stmt) is False
