"""Shared fixtures: synthetic overfit dataset and the attack catalog."""

import numpy as np

from sqlifuzz.dataset import AttackType, Condition, TrainingPair
from sqlifuzz.harness import Endpoint, Param, VerdictType
from sqlifuzz.tokens import TokenSequence, Vocabulary, build_vocab

GLYPHS = [f"t{i}" for i in range(12)]


def make_copy_dataset(n_pairs=200, seed=0, min_len=3, max_len=6):
    """Half the pairs copy their input, half apply a fixed glyph rotation.

    Inputs are unique, so the mapping is unambiguous and memorizable.
    """
    rng = np.random.default_rng(seed)
    rotation = {g: GLYPHS[(i + 1) % len(GLYPHS)] for i, g in enumerate(GLYPHS)}
    seen = set()
    pairs = []
    while len(pairs) < n_pairs:
        n = int(rng.integers(min_len, max_len + 1))
        texts = tuple(GLYPHS[int(i)] for i in rng.integers(0, len(GLYPHS), size=n))
        if texts in seen:
            continue
        seen.add(texts)
        if len(pairs) % 2 == 0:
            out_texts = texts
        else:
            out_texts = tuple(rotation[t] for t in texts)
        pairs.append(
            TrainingPair(
                TokenSequence.of(texts),
                TokenSequence.of(out_texts).framed(),
                Condition.ATTACK_TO_SIBLING,
                AttackType.OTHER,
            )
        )
    vocab = build_vocab([p.input for p in pairs])
    return pairs, vocab


def copy_vocab() -> Vocabulary:
    return Vocabulary.from_tokens(GLYPHS)


# ----------------------------------------------------------------------
# hand-built attack catalog: 10 cases per attack type, each paired with
# an endpoint whose template makes that classification the right one
# ----------------------------------------------------------------------

CATALOG_ENDPOINTS = {
    "login": Endpoint(
        "login",
        "SELECT id, level FROM members WHERE member_login = '${u}' "
        "AND member_password = '${p}'",
        (Param("u", "guest", True), Param("p", "guest123", True)),
    ),
    "single": Endpoint(
        "single",
        "SELECT card_type_id FROM card_types WHERE card_type_name = '${name}'",
        (Param("name", "visa", True),),
    ),
    "numeric": Endpoint(
        "numeric",
        "SELECT category_id, name FROM categories WHERE category_id = ${id}",
        (Param("id", "2", True),),
    ),
    "tailed": Endpoint(
        "tailed",
        "SELECT event_id FROM events WHERE event_id = ${id} AND status = 'open'",
        (Param("id", "5", True),),
    ),
    "insert": Endpoint(
        "insert",
        "INSERT INTO feedback (member_name, email) VALUES ('${name}', '${email}')",
        (Param("name", "alice", True), Param("email", "a@example.com", True)),
    ),
}

# (endpoint key, param, attack value, expected verdict type)
ATTACK_CATALOG = [
    # tautologies
    ("single", "name", "' OR 1=1 -- ", VerdictType.TAUTOLOGY),
    ("single", "name", "' OR '1'='1", VerdictType.TAUTOLOGY),
    ("single", "name", "' || 5<7 -- ", VerdictType.TAUTOLOGY),
    ("single", "name", "' OR 'a'='a", VerdictType.TAUTOLOGY),
    ("single", "name", "' OR 2 between 1 and 3 -- ", VerdictType.TAUTOLOGY),
    ("numeric", "id", "1 OR 1=1", VerdictType.TAUTOLOGY),
    ("numeric", "id", "0 OR 7>3", VerdictType.TAUTOLOGY),
    ("numeric", "id", "2 OR 1", VerdictType.TAUTOLOGY),
    ("login", "u", "admin'+OR+'1'='1", VerdictType.TAUTOLOGY),
    ("login", "u", "' oR 'h'='h' -- ", VerdictType.TAUTOLOGY),
    # piggy-backed queries
    ("numeric", "id", "2;delete from members", VerdictType.PIGGY_BACKED),
    ("single", "name", "'; DROP TABLE users -- ", VerdictType.PIGGY_BACKED),
    ("numeric", "id", "1; select 1", VerdictType.PIGGY_BACKED),
    ("single", "name", "'; delete from members; -- ", VerdictType.PIGGY_BACKED),
    ("numeric", "id", "0;update members set level=9", VerdictType.PIGGY_BACKED),
    ("insert", "name", "a'); delete from members -- ", VerdictType.PIGGY_BACKED),
    ("single", "name", "x%27%3B%20delete%20from%20members%20--", VerdictType.PIGGY_BACKED),
    ("numeric", "id", "2%3Bdelete%20from%20members", VerdictType.PIGGY_BACKED),
    ("login", "p", "'; select count(*) from members -- ", VerdictType.PIGGY_BACKED),
    ("numeric", "id", "3; insert into members (name) values ('x')", VerdictType.PIGGY_BACKED),
    # union queries
    ("single", "name", "' UNION SELECT database() -- ", VerdictType.UNION_QUERY),
    ("numeric", "id", "1 UNION SELECT name FROM users", VerdictType.UNION_QUERY),
    ("single", "name", "' union select null,null -- ", VerdictType.UNION_QUERY),
    ("numeric", "id", "0 UNION ALL SELECT 1,2", VerdictType.UNION_QUERY),
    ("single", "name", "' UnIoN/**/SeLeCt/**/1 -- ", VerdictType.UNION_QUERY),
    ("numeric", "id", "7 union select member_password from members", VerdictType.UNION_QUERY),
    ("single", "name", "%27%20UNION%20SELECT%20database()%20--", VerdictType.UNION_QUERY),
    ("login", "u", "' UNION SELECT 1,2 -- ", VerdictType.UNION_QUERY),
    ("numeric", "id", "2 union select 5", VerdictType.UNION_QUERY),
    ("single", "name", "' union select card_type_id from card_types -- ", VerdictType.UNION_QUERY),
    # comment truncation
    ("login", "u", "admin' -- ", VerdictType.COMMENT_TRUNCATION),
    ("login", "u", "admin'#", VerdictType.COMMENT_TRUNCATION),
    ("login", "u", "admin'/*", VerdictType.COMMENT_TRUNCATION),
    ("login", "u", "x' -- ", VerdictType.COMMENT_TRUNCATION),
    ("login", "u", "guest' -- xyz", VerdictType.COMMENT_TRUNCATION),
    ("login", "u", "%27%20--", VerdictType.COMMENT_TRUNCATION),
    ("login", "u", "bob'-- ", VerdictType.COMMENT_TRUNCATION),
    ("login", "u", "alice'%23", VerdictType.COMMENT_TRUNCATION),
    ("tailed", "id", "5 -- ", VerdictType.COMMENT_TRUNCATION),
    ("tailed", "id", "7#", VerdictType.COMMENT_TRUNCATION),
]
