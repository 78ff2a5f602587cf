"""Simulated production environment: bundled shop app, deterministic
traffic generation, and null-fault seeding.

The workload PRNG is SplitMix64 (documented in docs/formats.md) so the
same seed regenerates a byte-identical workload on any platform.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from importlib import resources

from . import values
from .envelopes import RequestEnvelope
from .hlang import ast
from .hlang import parse
from .hlang.interp import ExecLimits, execute
from .hlang.printer import render_program
from .store import ReadWriteHandle, Store

_MASK = (1 << 64) - 1


class SplitMix64:
    """SplitMix64, the workload PRNG (Steele et al.'s splittable generator)."""

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return (z ^ (z >> 31)) & _MASK

    def below(self, n: int) -> int:
        return self.next() % n

    def choice(self, seq):
        return seq[self.below(len(seq))]


class UnknownProfile(LookupError):
    pass


class NoEligibleCheck(LookupError):
    pass


PROFILES = ("shop",)

SESSIONS_PER_WORKLOAD = 25
REQUESTS_PER_SESSION = (3, 7)

PRODUCT_IDS = ["p1", "p2", "p3", "p4", "p5", "p6", "p7", "p8"]
VIEW_POOL = PRODUCT_IDS + ["p999"]  # p999 exercises the 404 path
CARRIER_POOL = ["flat", "flat", "promo", "ghost"]  # ghost: unknown carrier
EMAIL_POOL = ["ann", "bob", "cara", "dan"]


def load_shop_program() -> ast.Program:
    source = resources.files("shadowpatch.apps").joinpath("shop.hpl").read_text()
    return parse(source)


_NAME_STEMS = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta",
               "theta", "iota", "kappa"]
_NAME_KINDS = ["mug", "shirt", "poster", "cap", "pen", "bag"]

CATALOG_SIZE = 200


def initial_store() -> Store:
    products = [
        {
            "id": f"p{i}",
            "name": f"{_NAME_STEMS[(i - 1) % 10]}-{_NAME_KINDS[(i - 1) % 6]}",
            "price": (i * 137) % 5000 + 100,
        }
        for i in range(1, CATALOG_SIZE + 1)
    ]
    return Store({
        "products": products,
        "carrier:flat": {"name": "flat", "base": 500,
                         "per_item": {"cents": 150}},
        "carrier:promo": {"name": "promo", "base": 300, "per_item": None},
    })


# --- workload generation -----------------------------------------------------


@dataclass
class Session:
    session_id: str
    requests: list  # list[RequestEnvelope]


@dataclass
class Workload:
    sessions: list
    seed: int

    def all_requests(self):
        for s in self.sessions:
            yield from s.requests

    def serialize(self) -> str:
        lines = [f"# workload seed={self.seed}"]
        for s in self.sessions:
            for r in s.requests:
                lines.append(r.wire_line())
        return "\n".join(lines) + "\n"

    @classmethod
    def deserialize(cls, text: str) -> "Workload":
        seed = 0
        sessions = {}
        order = []
        for line in text.splitlines():
            if not line or line.startswith("#"):
                if line.startswith("# workload seed="):
                    seed = int(line.split("=", 1)[1])
                continue
            req = RequestEnvelope.from_wire_line(line)
            sid = req.session_id
            if sid not in sessions:
                sessions[sid] = Session(session_id=sid, requests=[])
                order.append(sid)
            sessions[sid].requests.append(req)
        return cls(sessions=[sessions[s] for s in order], seed=seed)


def _make_request(rng: SplitMix64, sid: str, kind: str) -> RequestEnvelope:
    if kind == "browse":
        method, path = "GET", "/catalog"
    elif kind == "view":
        method, path = "GET", f"/product/{rng.choice(VIEW_POOL)}"
    elif kind == "add":
        method, path = "POST", f"/cart/add?product={rng.choice(PRODUCT_IDS)}"
    elif kind == "shipping":
        method, path = "GET", f"/shipping?carrier={rng.choice(CARRIER_POOL)}"
    elif kind == "checkout":
        method, path = "POST", "/checkout"
    else:  # admin
        method, path = "POST", f"/admin/customer?email={rng.choice(EMAIL_POOL)}"
    return RequestEnvelope(method=method, path=path, session_id=sid)


REQUEST_KINDS = ["browse", "view", "add", "shipping", "checkout", "admin"]


def generate_workload(app_profile: str, seed: int) -> Workload:
    """25 sessions of 3-7 requests drawn uniformly from the profile's pool."""
    if app_profile not in PROFILES:
        raise UnknownProfile(app_profile)
    rng = SplitMix64(seed)
    sessions = []
    for i in range(SESSIONS_PER_WORKLOAD):
        sid = f"sid-{i:02d}-{rng.next() & 0xffffffff:08x}"
        lo, hi = REQUESTS_PER_SESSION
        count = lo + rng.below(hi - lo + 1)
        requests = [
            _make_request(rng, sid, rng.choice(REQUEST_KINDS))
            for _ in range(count)
        ]
        sessions.append(Session(session_id=sid, requests=requests))
    return Workload(sessions=sessions, seed=seed)


def run_workload(program: ast.Program, workload: Workload, store=None,
                 limits: ExecLimits = None):
    """Execute a workload sequentially against a fresh (or given) store."""
    store = store or initial_store()
    results = []
    for req in workload.all_requests():
        results.append(execute(program, req, ReadWriteHandle(store), limits))
    return results


# --- fault seeding -----------------------------------------------------------


@dataclass
class SeededFault:
    id: str
    method: str
    location: tuple  # (method, block, idx) of the removed check
    path: tuple  # structural path to the If inside the method body
    original_stmt: ast.If = field(repr=False, default=None)
    replaced_count: int = 0


def _null_check_shape(st: ast.Stmt):
    """Return (keep_branch,) info if st is a not-null check, else None.

    Shapes: `if (E == null) { A } else { B }` (A handles null) and
    `if (E != null) { B } else { A }`. Returns the B branch statements.
    """
    if not isinstance(st, ast.If) or not isinstance(st.cond, ast.Binary):
        return None
    cond = st.cond
    if cond.op not in ("==", "!="):
        return None
    sides = (cond.left, cond.right)
    if not any(isinstance(s, ast.Lit) and s.value is None for s in sides):
        return None
    return st.els if cond.op == "==" else st.then


def eligible_checks(program: ast.Program, covered_blocks=None):
    """All not-null checks, optionally restricted to covered blocks.

    Returns a deterministic list of (method_name, stmt, path) in source order.
    """
    out = []
    for name in program.methods:
        method = program.methods[name]
        for st, path in _walk_with_paths(method.body):
            if _null_check_shape(st) is None:
                continue
            if covered_blocks is not None and (name, st.block) not in covered_blocks:
                continue
            out.append((name, st, path))
    return out


def _walk_with_paths(stmts, prefix=()):
    for i, st in enumerate(stmts):
        path = prefix + ((i, -1),)
        yield st, path
        for j, sub in enumerate(ast.sub_stmt_lists(st)):
            yield from _walk_with_paths(sub, prefix + ((i, j),))


def _resolve_path(method: ast.Method, path):
    """Navigate a structural path to (containing_list, index)."""
    stmts = method.body
    for (i, j) in path[:-1]:
        stmts = ast.sub_stmt_lists(stmts[i])[j]
    return stmts, path[-1][0]


def seed_null_fault(program: ast.Program, rng_seed: int,
                    covered_blocks=None):
    """Remove the null-handling branch of a sampled not-null check.

    Returns (faulted_program, fault). The check `if (E == null) {A} else {B}`
    is rewritten to execute B unconditionally.
    """
    checks = eligible_checks(program, covered_blocks)
    if not checks:
        raise NoEligibleCheck("program has no eligible not-null check")
    rng = SplitMix64(rng_seed)
    name, st, path = checks[rng.below(len(checks))]
    return apply_fault(program, name, st, path)


def scripted_fault(program: ast.Program, scenario: str):
    """The two bundled bug scenarios: shipping and admin-email."""
    targets = {
        "shipping": ("shipping_quote", "per"),
        "admin-email": ("add_customer", "created"),
    }
    if scenario not in targets:
        raise LookupError(f"unknown scenario {scenario!r}")
    method_name, var = targets[scenario]
    for name, st, path in eligible_checks(program):
        if name != method_name:
            continue
        cond = st.cond
        for side in (cond.left, cond.right):
            if isinstance(side, ast.Var) and side.name == var:
                return apply_fault(program, name, st, path)
    raise LookupError(f"scenario check not found: {scenario}")


def apply_fault(program: ast.Program, method_name: str, check: ast.If, path):
    faulted = copy.deepcopy(program)
    method = faulted.methods[method_name]
    stmts, i = _resolve_path(method, path)
    original = stmts[i]
    keep = _null_check_shape(original)
    stmts[i:i + 1] = keep
    ast.assign_blocks(method)
    fault = SeededFault(
        id=f"fault:{method_name}:{check.block}:{check.idx}",
        method=method_name,
        location=(method_name, check.block, check.idx),
        path=tuple(path),
        original_stmt=copy.deepcopy(original),
        replaced_count=len(keep),
    )
    return faulted, fault


def revert_fault(faulted: ast.Program, fault: SeededFault) -> ast.Program:
    restored = copy.deepcopy(faulted)
    method = restored.methods[fault.method]
    stmts, i = _resolve_path(method, fault.path)
    stmts[i:i + fault.replaced_count] = [copy.deepcopy(fault.original_stmt)]
    ast.assign_blocks(method)
    return restored


def verify_fault_triggers(program: ast.Program, faulted: ast.Program,
                          workload: Workload) -> bool:
    """True iff >=1 workload request fails on the faulted program while the
    original stays failure-free, each run from a fresh store."""
    for res in run_workload(program, workload):
        if not res.ok:
            return False
    return any(not res.ok for res in run_workload(faulted, workload))


def covered_blocks_for(program: ast.Program, workload: Workload):
    covered = set()
    for res in run_workload(program, workload):
        covered |= res.coverage.blocks
    return covered
