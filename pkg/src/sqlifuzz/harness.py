"""
Closed-loop evaluation environment: a mock vulnerable web application, an
HTML-form crawler that finds injection points, a structural SQL-parse
oracle, and the feedback fuzzing loop.

No database is ever touched. Submitting a value renders the endpoint's
query template (vulnerable holes verbatim, the rest as inert quoted
literals) and the oracle compares the parse of the rendered SQL against
the parse of the benignly-rendered template. A submission is an attack
when the structure deviates by an always-true disjunct (tautology), an
extra statement (piggy-backed), a new UNION arm, or a comment that
truncated the template's tail.

The SUT itself is an in-process object loaded from a "sqlifuzz-sut v1"
text file; `serve` optionally exposes the same submit surface on a local
socket.
"""

from __future__ import annotations

import hashlib
import logging
import random
import re
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from html.parser import HTMLParser
from pathlib import Path
from typing import Mapping

from . import sqlparse
from .beam import EmptyInput, translate
from .mutation import percent_decode
from .sqlparse import SqlSyntaxError, parse, shape
from .tokens import COLUMN, NORMAL, TABLE, Vocabulary

log = logging.getLogger("sqlifuzz.harness")

SUT_HEADER = "sqlifuzz-sut v1"


class ValidationLevel(Enum):
    NONE = "none"
    ESSENTIAL = "essential"
    ADVANCED = "advanced"


class Outcome(Enum):
    NOT_ATTACK = "not_attack"
    REJECTED = "rejected"
    SYNTAX_ERROR = "syntax_error"
    ATTACK = "attack"


class VerdictType(Enum):
    TAUTOLOGY = "tautology"
    PIGGY_BACKED = "piggy_backed"
    UNION_QUERY = "union_query"
    COMMENT_TRUNCATION = "comment_truncation"
    OTHER = "other"


class SutFormatError(ValueError):
    pass


class UnknownEndpoint(KeyError):
    pass


class MissingParam(ValueError):
    pass


class MalformedHtml(ValueError):
    pass


@dataclass(frozen=True)
class AttackVerdict:
    outcome: Outcome
    attack_type: VerdictType | None = None

    def __post_init__(self) -> None:
        if (self.attack_type is not None) != (self.outcome is Outcome.ATTACK):
            raise ValueError("attack_type must be present exactly for attacks")


@dataclass(frozen=True)
class Param:
    name: str
    default: str
    vulnerable: bool


@dataclass(frozen=True)
class Endpoint:
    id: str
    template: str
    params: tuple[Param, ...]

    def param(self, name: str) -> Param:
        for p in self.params:
            if p.name == name:
                return p
        raise MissingParam(f"endpoint {self.id!r} has no param {name!r}")

    def defaults(self) -> dict[str, str]:
        return {p.name: p.default for p in self.params}


@dataclass(frozen=True)
class Page:
    path: str
    html: str


@dataclass(frozen=True)
class SutSpec:
    pages: tuple[Page, ...]
    endpoints: tuple[Endpoint, ...]
    validation: ValidationLevel = ValidationLevel.NONE

    def endpoint(self, endpoint_id: str) -> Endpoint:
        for e in self.endpoints:
            if e.id == endpoint_id:
                return e
        raise UnknownEndpoint(endpoint_id)

    def with_validation(self, level: ValidationLevel) -> "SutSpec":
        return SutSpec(self.pages, self.endpoints, level)


# ----------------------------------------------------------------------
# input validation filters
# ----------------------------------------------------------------------

ESSENTIAL_KEYWORDS = ("and", "or", "select", "union", "insert", "delete", "drop")
ESSENTIAL_SUBSTRINGS = ("--",)
ADVANCED_SUBSTRINGS = ("&&", "||", "#", ";", "/*")

_KEYWORD_RES = [
    re.compile(rf"\b{kw}\b", re.IGNORECASE) for kw in ESSENTIAL_KEYWORDS
]


def validate_input(value: str, level: ValidationLevel) -> bool:
    """Keyword blocklist (essential) plus special characters (advanced).

    Filters look at the raw submitted value, before any URL decoding;
    that blind spot is exactly what disguise attacks exploit.
    """
    if level is ValidationLevel.NONE:
        return True
    for pattern in _KEYWORD_RES:
        if pattern.search(value):
            return False
    if any(s in value for s in ESSENTIAL_SUBSTRINGS):
        return False
    if level is ValidationLevel.ADVANCED:
        if any(s in value for s in ADVANCED_SUBSTRINGS):
            return False
    return True


# ----------------------------------------------------------------------
# rendering and the oracle
# ----------------------------------------------------------------------

_HOLE_RE = re.compile(r"\$\{(\w+)\}")


def _inert(value: str) -> str:
    """Quoted literal whose content cannot alter statement structure, even
    after the oracle's one URL-decoding pass."""
    return "'" + value.replace("%", "%25").replace("'", "''") + "'"


def render(endpoint: Endpoint, values: Mapping[str, str]) -> str:
    """Fill the template's holes: vulnerable params verbatim, the rest as
    inert quoted literals."""

    def fill(match: re.Match) -> str:
        param = endpoint.param(match.group(1))
        value = values[param.name]
        return value if param.vulnerable else _inert(value)

    return _HOLE_RE.sub(fill, endpoint.template)


def oracle(template_sql: str, rendered_sql: str) -> AttackVerdict:
    """Classify a rendered statement against its template.

    Both sides are URL-decoded once (server-side decoding), parsed, and
    compared structurally with literal values wildcarded.
    """
    template = parse(percent_decode(template_sql))
    try:
        rendered = parse(percent_decode(rendered_sql))
    except SqlSyntaxError:
        return AttackVerdict(Outcome.SYNTAX_ERROR)
    t_shapes = [shape(s) for s in template.statements]
    r_shapes = [shape(s) for s in rendered.statements]
    if t_shapes == r_shapes:
        return AttackVerdict(Outcome.NOT_ATTACK)
    if len(rendered.statements) > len(template.statements):
        return AttackVerdict(Outcome.ATTACK, VerdictType.PIGGY_BACKED)
    r_unions = sum(sqlparse.count_unions(s) for s in rendered.statements)
    t_unions = sum(sqlparse.count_unions(s) for s in template.statements)
    if r_unions > t_unions:
        return AttackVerdict(Outcome.ATTACK, VerdictType.UNION_QUERY)
    if any(sqlparse.has_true_disjunct(s) for s in rendered.statements) and not any(
        sqlparse.has_true_disjunct(s) for s in template.statements
    ):
        return AttackVerdict(Outcome.ATTACK, VerdictType.TAUTOLOGY)
    if rendered.had_comment:
        return AttackVerdict(Outcome.ATTACK, VerdictType.COMMENT_TRUNCATION)
    # shape deviated some other way (e.g. an always-false conjunct):
    # outside the attack catalog, so not counted as a success
    return AttackVerdict(Outcome.NOT_ATTACK)


def submit(
    sut: SutSpec, endpoint_id: str, values: Mapping[str, str]
) -> tuple[str | None, AttackVerdict]:
    """Validate, render and classify one submission.

    Returns (rendered SQL, verdict); rendered is None when validation
    rejected the submission, in which case nothing reaches the oracle.
    """
    endpoint = sut.endpoint(endpoint_id)
    missing = [p.name for p in endpoint.params if p.name not in values]
    if missing:
        raise MissingParam(f"missing values for {missing} on {endpoint_id!r}")
    for name in values:
        endpoint.param(name)  # unknown names are caller bugs
    for value in values.values():
        if not validate_input(value, sut.validation):
            return None, AttackVerdict(Outcome.REJECTED)
    rendered = render(endpoint, values)
    template_sql = render(endpoint, endpoint.defaults())
    return rendered, oracle(template_sql, rendered)


# ----------------------------------------------------------------------
# crawler
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class InjectionPoint:
    endpoint_id: str
    param: str
    default: str


class _FormExtractor(HTMLParser):
    def __init__(self) -> None:
        super().__init__()
        self.forms: list[tuple[str | None, list[tuple[str, str | None]]]] = []
        self._current: tuple[str | None, list] | None = None

    def handle_starttag(self, tag, attrs):
        attr = dict(attrs)
        if tag == "form":
            self._current = (attr.get("action"), [])
            self.forms.append(self._current)
        elif tag in ("input", "textarea") and self._current is not None:
            if attr.get("type") in ("submit", "button", "reset"):
                return
            if not attr.get("name"):
                return  # unnamed controls never reach the endpoint
            self._current[1].append((attr["name"], attr.get("value")))

    def handle_endtag(self, tag):
        if tag == "form":
            self._current = None


def crawl(sut: SutSpec) -> list[InjectionPoint]:
    """Extract the user-input fields of every form as injection points.

    A field's default is its HTML value attribute, falling back to the
    endpoint's declared default. Endpoint params with no form field are
    unreachable and not returned.
    """
    points: list[InjectionPoint] = []
    seen: set[tuple[str, str]] = set()
    for page in sut.pages:
        extractor = _FormExtractor()
        extractor.feed(page.html)
        extractor.close()
        for action, fields in extractor.forms:
            if not action:
                raise MalformedHtml(f"{page.path}: form without an action")
            try:
                endpoint = sut.endpoint(action)
            except UnknownEndpoint:
                raise MalformedHtml(
                    f"{page.path}: form targets unknown endpoint {action!r}"
                ) from None
            for name, value in fields:
                param = endpoint.param(name)
                key = (endpoint.id, name)
                if key in seen:
                    continue
                seen.add(key)
                points.append(
                    InjectionPoint(endpoint.id, name, value or param.default)
                )
    return points


# ----------------------------------------------------------------------
# SUT config file
# ----------------------------------------------------------------------

def parse_sut(text: str, origin: str = "<sut>") -> SutSpec:
    lines = text.split("\n")
    if not lines or lines[0].strip() != SUT_HEADER:
        raise SutFormatError(f"{origin}: missing '{SUT_HEADER}' header")
    pages: list[Page] = []
    endpoints: list[Endpoint] = []
    validation = ValidationLevel.NONE
    section: str | None = None
    current: dict = {}
    html_open = False

    def close_section() -> None:
        nonlocal current, html_open
        if section == "page":
            if "path" not in current or "html" not in current:
                raise SutFormatError(f"{origin}: [page] needs path and html")
            pages.append(Page(current["path"], "\n".join(current["html"])))
        elif section == "endpoint":
            if "id" not in current or "template" not in current:
                raise SutFormatError(f"{origin}: [endpoint] needs id and template")
            endpoints.append(
                Endpoint(current["id"], current["template"],
                         tuple(current.get("params", [])))
            )
        current = {}
        html_open = False

    for lineno, raw in enumerate(lines[1:], start=2):
        if html_open and (raw.startswith(" ") or raw.startswith("\t")):
            current["html"].append(raw.strip())
            continue
        html_open = False
        line = raw.rstrip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            if section is not None:
                close_section()
            section = line[1:-1]
            if section not in ("page", "endpoint", "validation"):
                raise SutFormatError(f"{origin}:{lineno}: unknown section {section!r}")
            continue
        if section is None or "=" not in line:
            raise SutFormatError(f"{origin}:{lineno}: unexpected line {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if section == "page" and key == "html":
            current["html"] = [value] if value else []
            html_open = True
        elif section == "page" and key == "path":
            current["path"] = value
        elif section == "endpoint" and key in ("id", "template"):
            current[key] = value
        elif section == "endpoint" and key == "param":
            parts = [p.strip() for p in value.split("|")]
            if len(parts) != 3 or parts[2] not in ("vulnerable", "inert"):
                raise SutFormatError(
                    f"{origin}:{lineno}: param must be 'name | default | "
                    f"vulnerable-or-inert'"
                )
            current.setdefault("params", []).append(
                Param(parts[0], parts[1], parts[2] == "vulnerable")
            )
        elif section == "validation" and key == "level":
            try:
                validation = ValidationLevel(value)
            except ValueError:
                raise SutFormatError(
                    f"{origin}:{lineno}: unknown validation level {value!r}"
                ) from None
        else:
            raise SutFormatError(f"{origin}:{lineno}: unexpected key {key!r}")
    if section is not None:
        close_section()
    sut = SutSpec(tuple(pages), tuple(endpoints), validation)
    _check_sut(sut, origin)
    return sut


def _check_sut(sut: SutSpec, origin: str) -> None:
    for endpoint in sut.endpoints:
        names = {p.name for p in endpoint.params}
        holes = set(_HOLE_RE.findall(endpoint.template))
        if holes != names:
            raise SutFormatError(
                f"{origin}: endpoint {endpoint.id!r} params {sorted(names)} do "
                f"not match template holes {sorted(holes)}"
            )
        for param in endpoint.params:
            if param.vulnerable:
                continue
            # inert holes are quoted by the renderer; a quoted hole in the
            # template would double up
            for m in _HOLE_RE.finditer(endpoint.template):
                if m.group(1) != param.name:
                    continue
                before = endpoint.template[: m.start()]
                after = endpoint.template[m.end() :]
                if before.endswith("'") or after.startswith("'"):
                    raise SutFormatError(
                        f"{origin}: inert param {param.name!r} must not be "
                        f"quoted in the template"
                    )
        benign = render(endpoint, endpoint.defaults())
        try:
            parse(percent_decode(benign))
        except SqlSyntaxError as exc:
            raise SutFormatError(
                f"{origin}: endpoint {endpoint.id!r} template does not parse "
                f"with benign defaults: {exc}"
            ) from exc


def load_sut(path) -> SutSpec:
    return parse_sut(Path(path).read_text(encoding="utf-8"), str(path))


# ----------------------------------------------------------------------
# the fuzzing loop
# ----------------------------------------------------------------------

@dataclass
class FuzzConfig:
    beam_width: int = 5
    max_attempts: int = 10  # re-translation rounds per starting point
    max_submissions_per_point: int = 50
    max_len: int = 32
    seed: int = 0


@dataclass
class PointResult:
    endpoint_id: str
    param: str
    found: bool
    attack_type: VerdictType | None
    attempts: int
    seconds: float


@dataclass
class FuzzReport:
    points: list[PointResult]
    t_total: int
    t_success: int
    wall_clock_seconds: float
    validation: ValidationLevel

    @property
    def vulnerabilities(self) -> set[tuple[str, str]]:
        return {(p.endpoint_id, p.param) for p in self.points if p.found}

    @property
    def er(self) -> Fraction:
        if self.t_total == 0:
            return Fraction(0)
        return Fraction(self.t_success, self.t_total)

    @property
    def er_percent(self) -> str:
        return f"{float(self.er) * 100:.2f}%"


def _point_rng(seed: int, endpoint_id: str, param: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{endpoint_id}:{param}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "little"))


def _endpoint_schema(endpoint: Endpoint) -> tuple[list[str], list[str]]:
    tables: list[str] = []
    columns: list[str] = []
    try:
        parsed = parse(render(endpoint, endpoint.defaults()))
    except SqlSyntaxError:
        return tables, columns
    for stmt in parsed.statements:
        if isinstance(stmt, sqlparse.Select):
            tables.extend(stmt.tables)
            for item in stmt.items:
                if isinstance(item, sqlparse.Ident):
                    columns.append(item.name)
        elif isinstance(stmt, sqlparse.Insert):
            tables.append(stmt.table)
            columns.extend(stmt.columns)
    return tables, columns


def _template_hints(sut: SutSpec) -> tuple[list[str], list[str]]:
    tables: list[str] = []
    columns: list[str] = []
    for endpoint in sut.endpoints:
        ep_tables, ep_columns = _endpoint_schema(endpoint)
        tables.extend(ep_tables)
        columns.extend(ep_columns)
    return sorted(set(tables)), sorted(set(columns))


def _fuzz_point(
    sut: SutSpec,
    point: InjectionPoint,
    model,
    vocab: Vocabulary,
    config: FuzzConfig,
    tables: list[str],
    columns: list[str],
) -> PointResult:
    """Run the translate-submit loop for one injection point.

    Pure given its inputs: the point's random stream is derived from
    (seed, endpoint, param), so points can run concurrently and still
    reproduce exactly.
    """
    endpoint = sut.endpoint(point.endpoint_id)
    ep_tables, ep_columns = _endpoint_schema(endpoint)
    rendering = {NORMAL: point.default}
    if ep_tables:
        rendering[TABLE] = ep_tables[0]
    if ep_columns:
        rendering[COLUMN] = ep_columns[0]
    rng = _point_rng(config.seed, point.endpoint_id, point.param)
    started = time.perf_counter()
    submitted: set[str] = set()
    queued: set[str] = {point.default}
    queue: deque[str] = deque([point.default])
    found = False
    found_type: VerdictType | None = None
    attempts = 0
    while queue and not found and attempts < config.max_submissions_per_point:
        current = queue.popleft()
        for _ in range(config.max_attempts):
            if attempts >= config.max_submissions_per_point:
                break
            try:
                candidates = translate(
                    model, vocab, current, m=config.beam_width,
                    max_len=config.max_len, tables=tables, columns=columns,
                    context=rendering,
                )
            except EmptyInput:
                break
            fresh = [c for c, _ in candidates if c not in submitted]
            if not fresh:
                break
            choice = fresh[rng.randrange(len(fresh))]
            for other in fresh:
                if other != choice and other not in queued:
                    queued.add(other)
                    queue.append(other)
            values = endpoint.defaults()
            values[point.param] = choice
            _, verdict = submit(sut, endpoint.id, values)
            submitted.add(choice)
            attempts += 1
            if verdict.outcome is Outcome.ATTACK:
                found = True
                found_type = verdict.attack_type
                log.info(
                    "%s.%s: %s via %r after %d submissions",
                    endpoint.id, point.param, verdict.attack_type.value,
                    choice, attempts,
                )
                break
            current = choice
    return PointResult(
        point.endpoint_id, point.param, found, found_type, attempts,
        time.perf_counter() - started,
    )


def fuzz(
    sut: SutSpec,
    model,
    vocab: Vocabulary,
    config: FuzzConfig | None = None,
    jobs: int = 1,
) -> FuzzReport:
    """Drive the translate-submit loop over every crawled injection point.

    Each point starts from its benign default. One of the beam's fresh
    candidates is chosen at random and submitted; on failure the chosen
    candidate is re-translated and the unchosen ones queue as future
    starting points, until the point's budget runs out or an attack
    lands, after which the point is closed. Every submission counts
    toward the totals; only attack verdicts count as successes. With
    jobs > 1, points run in worker threads over the shared read-only
    model; the report is identical either way.
    """
    config = config or FuzzConfig()
    points = crawl(sut)
    if not points:
        raise ValueError("SUT exposes no injection points")
    tables, columns = _template_hints(sut)
    started = time.perf_counter()
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(
                    lambda p: _fuzz_point(sut, p, model, vocab, config,
                                          tables, columns),
                    points,
                )
            )
    else:
        results = [
            _fuzz_point(sut, p, model, vocab, config, tables, columns)
            for p in points
        ]
    t_total = sum(r.attempts for r in results)
    t_success = sum(1 for r in results if r.found)
    return FuzzReport(
        results, t_total, t_success,
        time.perf_counter() - started, sut.validation,
    )


# ----------------------------------------------------------------------
# optional local-socket front door
# ----------------------------------------------------------------------

def serve(sut: SutSpec, host: str = "127.0.0.1", port: int = 0):
    """Expose pages and the submit surface over HTTP on a local socket.

    GET <page path> returns the page HTML; POST /submit/<endpoint id>
    with form-encoded params runs submit() and reports the verdict as
    plain text. Returns the listening HTTPServer; callers drive it with
    serve_forever/handle_request and shut it down themselves.
    """
    from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
    from urllib.parse import parse_qsl, urlsplit

    page_map = {p.path: p.html for p in sut.pages}

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):  # quiet by default
            log.debug("http: " + args[0], *args[1:])

        def _respond(self, code: int, body: str, ctype: str = "text/plain") -> None:
            data = body.encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", f"{ctype}; charset=utf-8")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _submit(self, endpoint_id: str, pairs) -> None:
            try:
                values = dict(pairs)
                _, verdict = submit(sut, endpoint_id, values)
            except (UnknownEndpoint, MissingParam) as exc:
                self._respond(400, f"error: {exc}\n")
                return
            kind = verdict.attack_type.value if verdict.attack_type else "-"
            self._respond(200, f"outcome={verdict.outcome.value} type={kind}\n")

        def do_GET(self):
            url = urlsplit(self.path)
            if url.path in page_map:
                self._respond(200, page_map[url.path], "text/html")
            elif url.path.startswith("/submit/"):
                self._submit(url.path[len("/submit/"):], parse_qsl(url.query))
            else:
                self._respond(404, "not found\n")

        def do_POST(self):
            url = urlsplit(self.path)
            if not url.path.startswith("/submit/"):
                self._respond(404, "not found\n")
                return
            length = int(self.headers.get("Content-Length", "0"))
            body = self.rfile.read(length).decode("utf-8")
            self._submit(url.path[len("/submit/"):], parse_qsl(body))

    return ThreadingHTTPServer((host, port), Handler)
