"""Patch models: enumeration, application, diffs, and the state machine."""

import pytest

from shadowpatch import appsim, patches
from shadowpatch.envelopes import RequestEnvelope
from shadowpatch.hlang import parse
from shadowpatch.hlang.printer import render_program
from shadowpatch.runtime import sandbox_execute


def failing(program, method="GET", path="/t", store=None):
    store = store or appsim.initial_store()
    result = sandbox_execute(program, RequestEnvelope(method=method,
                                                      path=path), store)
    assert not result.ok
    return result.exception


@pytest.fixture()
def shipping_failure():
    program, _ = appsim.scripted_fault(appsim.load_shop_program(), "shipping")
    exc = failing(program, path="/shipping?carrier=promo")
    return program, exc


# --- null-recovery enumeration -------------------------------------------------


def test_shipping_space_is_frozen(shipping_failure):
    program, exc = shipping_failure
    space = patches.enumerate_null_recovery(program, exc, "sig")
    entries = [(p.strategy, p.payload) for p in space.patches]
    assert entries == [
        ("S1-inject-var", "c"),
        ("S1-inject-var", "n"),
        ("S2-inject-default", "0"),
        ("S2-inject-default", '""'),
        ("S2-inject-default", "false"),
        ("S2-inject-default", "{}"),
        ("S2-inject-default", "[]"),
        ("S3-skip", ""),
        ("S4-return-default", "{}"),
        ("S5-return-var", "c"),
        ("S5-return-var", "per"),
    ]


def test_enumeration_is_deterministic(shipping_failure):
    program, exc = shipping_failure
    a = patches.enumerate_null_recovery(program, exc, "sig")
    b = patches.enumerate_null_recovery(program, exc, "sig")
    assert [p.id for p in a.patches] == [p.id for p in b.patches]
    assert a.serialize() == b.serialize()


def test_non_null_failure_rejected(shipping_failure):
    program, _ = shipping_failure
    exc = failing(parse("routes {\n  GET /t -> m\n}\n"
                        "method m(req: record) {\n  let x = 1 / 0;\n}\n"))
    with pytest.raises(patches.NotANullDeref):
        patches.enumerate_null_recovery(program, exc)


def test_required_int_with_two_int_scope_vars_yields_two_s1_variants():
    program = parse(
        "routes {\n  GET /t -> m\n}\n"
        "method m(req: record): int {\n"
        "  let a: int = 1;\n"
        "  let b: int = 2;\n"
        "  let p = req.missing;\n"
        "  let x = p.v;\n"
        "  return x;\n"
        "}\n")
    exc = failing(program)
    space = patches.enumerate_null_recovery(program, exc,
                                            required_type="int")
    s1 = [p.payload for p in space.patches if p.strategy == "S1-inject-var"]
    assert s1 == ["a", "b"]
    s2 = [p.payload for p in space.patches
          if p.strategy == "S2-inject-default"]
    assert s2 == ["0"]


def test_no_compatible_vars_leaves_variable_free_strategies_only():
    program = parse(
        "routes {\n  GET /t -> m\n}\n"
        "method m(req: record): int {\n"
        "  return req.missing.x;\n"
        "}\n")
    exc = failing(program)
    space = patches.enumerate_null_recovery(program, exc,
                                            required_type="int")
    strategies = {p.strategy for p in space.patches}
    assert "S1-inject-var" not in strategies
    assert "S5-return-var" not in strategies
    assert strategies == {"S2-inject-default", "S3-skip",
                          "S4-return-default"}


def test_s2_suppressed_inside_assignment_target():
    # `cart.items = append(cart.items, ...)` — a literal on the left side
    # would be unassignable, so only variable injection is offered.
    program = parse(
        "routes {\n  POST /t -> m\n}\n"
        "method m(req: record) {\n"
        "  let cart = req.missing;\n"
        "  cart.items = append(cart.items, 1);\n"
        "  respond(200, \"ok\");\n"
        "}\n")
    exc = failing(program, method="POST")
    space = patches.enumerate_null_recovery(program, exc)
    assert all(p.strategy != "S2-inject-default" for p in space.patches)


def test_s6_plain_return_for_void_methods():
    program = parse(
        "routes {\n  GET /t -> m\n}\n"
        "method m(req: record) {\n"
        "  let p = req.missing;\n"
        "  let x = p.v;\n"
        "  respond(200, str(x));\n"
        "}\n")
    exc = failing(program)
    space = patches.enumerate_null_recovery(program, exc)
    strategies = [p.strategy for p in space.patches]
    assert "S6-return-void" in strategies
    assert "S4-return-default" not in strategies
    assert "S5-return-var" not in strategies


def test_s2_default_reproduces_handwritten_guard_shape(shipping_failure):
    program, exc = shipping_failure
    space = patches.enumerate_null_recovery(program, exc)
    zero = next(p for p in space.patches
                if p.strategy == "S2-inject-default" and p.payload == "0")
    patched = patches.apply_patch(program, zero)
    text = render_program(patched)
    assert "if (per == null) {" in text
    assert "let total = c.base + 0 * n;" in text


# --- exception-stopper enumeration ---------------------------------------------


def test_stopper_space_matches_formula(shipping_failure):
    program, exc = shipping_failure
    space = patches.enumerate_exception_stopper(program, exc, "sig")
    assert len(space.patches) == patches.stopper_space_size(program, exc) == 4
    # innermost frame first
    assert space.patches[0].target == "shipping_quote"
    assert space.patches[-1].target == "compute_shipping"
    assert space.patches[-1].strategy == "catch-return-void"


def test_stopper_handles_any_return_with_null_default():
    program = parse(
        "routes {\n  GET /t -> m\n}\n"
        "method helper(v: record): any {\n  return v.x.y;\n}\n"
        "method m(req: record) {\n"
        "  respond(200, str(helper({})));\n"
        "}\n")
    exc = failing(program)
    space = patches.enumerate_exception_stopper(program, exc)
    defaults = [p.payload for p in space.patches
                if p.strategy == "catch-return-default"]
    assert defaults == ["null"]


# --- edit application -----------------------------------------------------------


def test_apply_does_not_touch_the_input(shipping_failure):
    program, exc = shipping_failure
    before = render_program(program)
    for patch in patches.enumerate_null_recovery(program, exc).patches:
        patches.apply_patch(program, patch)
        assert render_program(program) == before


def test_apply_bumps_version_and_is_injective(shipping_failure):
    program, exc = shipping_failure
    space = patches.enumerate_null_recovery(program, exc)
    renders = [render_program(patches.apply_patch(program, p))
               for p in space.patches]
    assert len(set(renders)) == len(renders)
    assert all(patches.apply_patch(program, p).version
               == program.version + 1 for p in space.patches)


def test_stale_version_rejected(shipping_failure):
    program, exc = shipping_failure
    patch = patches.enumerate_null_recovery(program, exc).patches[0]
    moved = patches.apply_patch(program, patch)
    with pytest.raises(patches.StaleProgramVersion):
        patches.apply_patch(moved, patch)


def test_target_missing_errors(shop):
    with pytest.raises(patches.TargetMissing):
        patches.apply_edit(shop, {"kind": "skip", "pos": ["health", 9, 9]})
    with pytest.raises(patches.TargetMissing):
        patches.apply_edit(shop, {"kind": "catch-wrap", "method": "ghost",
                                  "value": None})
    with pytest.raises(patches.TargetMissing):
        patches.apply_edit(shop, {
            "kind": "replace-method", "method": "health",
            "source": "method other(req: record) {\n  skip;\n}\n"})


def test_skip_diff_touches_exactly_one_line(shipping_failure):
    program, exc = shipping_failure
    skip = next(p for p in patches.enumerate_null_recovery(
        program, exc).patches if p.strategy == "S3-skip")
    diff = patches.render_diff(program, skip)
    minus = [l for l in diff.splitlines() if l.startswith("-")
             and not l.startswith("---")]
    plus = [l for l in diff.splitlines() if l.startswith("+")
            and not l.startswith("+++")]
    assert len(minus) == len(plus) == 1
    assert plus[0].lstrip("+").strip() == "skip;"


def test_catch_wrap_swallows_the_failure(shipping_failure):
    program, exc = shipping_failure
    wrap = patches.enumerate_exception_stopper(program, exc).patches[-1]
    patched = patches.apply_patch(program, wrap)
    result = sandbox_execute(
        patched, RequestEnvelope(method="GET",
                                 path="/shipping?carrier=promo"),
        appsim.initial_store())
    assert result.ok


# --- state machine ---------------------------------------------------------------


def test_state_machine_paths():
    patch = patches.CandidatePatch(id="x", model="m", strategy="s",
                                   target="t", payload="", edit={},
                                   origin_version=0)
    patch.transition("valid")
    patch.transition("surviving")
    patch.transition("approved")
    with pytest.raises(patches.InvalidTransition):
        patch.transition("rejected")

    dead = patches.CandidatePatch(id="y", model="m", strategy="s",
                                  target="t", payload="", edit={},
                                  origin_version=0)
    dead.transition("invalid")
    with pytest.raises(patches.InvalidTransition):
        dead.transition("valid")


def test_patch_ids_depend_on_identity_fields():
    a = patches._patch_id("m", "s", ("x", 0, 0), "p")
    assert a == patches._patch_id("m", "s", ("x", 0, 0), "p")
    assert a != patches._patch_id("m", "s", ("x", 0, 1), "p")
    assert a != patches._patch_id("m", "s2", ("x", 0, 0), "p")
