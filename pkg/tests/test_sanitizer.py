import math
import random
import re
from pathlib import Path

import pytest

from opttune.errors import SanitizerError
from opttune.sanitizer import (
    anonymize,
    deanonymize,
    deanonymize_text,
    detect_format,
    file_digest,
    parse_lp,
    parse_mps,
    verify_map,
    write_lp,
    write_mps,
    NameMap,
)
from opttune.sanitizer.lp import anonymize_lp_text
from opttune.sanitizer.mps import anonymize_mps_text

from conftest import FIXTURES

MPS_FIXTURES = sorted(FIXTURES.glob("*.mps"))
LP_FIXTURES = sorted(FIXTURES.glob("*.lp"))
TINY_LPS = [FIXTURES / f"tiny{i}.lp" for i in (1, 2, 3)]


def test_fixture_inventory():
    assert len(MPS_FIXTURES) + len(LP_FIXTURES) >= 10
    assert len(MPS_FIXTURES) >= 5
    assert len(LP_FIXTURES) >= 3


# -- golden behaviors


def test_afiro_style_golden():
    text = (FIXTURES / "afiro_style.mps").read_text()
    sanitized, nm = anonymize_mps_text(text)
    assert nm.generic_to_original["OBJ"] == "TOTALCOST"
    assert nm.generic_to_original["CON1"] == "CAPACITY1"
    assert nm.generic_to_original["X1"] == "MAKEWIDGET"
    assert nm.generic_to_original["MODEL"] == "PRODPLAN"
    # 1 model name + 1 objective + 4 constraints + 3 variables
    assert len(nm) == 9
    assert "TOTALCOST" not in sanitized
    assert "MAKEWIDGET" not in sanitized
    assert sanitized.startswith("NAME")
    assert "* " not in sanitized  # comments gone


def test_empty_model_empty_map():
    text = (FIXTURES / "empty_model.mps").read_text()
    sanitized, nm = anonymize_mps_text(text)
    assert len(nm) == 0
    assert "IGNOREME" not in sanitized
    parsed = parse_mps(sanitized)
    assert parsed.rows == []
    assert parsed.column_entries == []


def test_coefficient_text_bit_identical():
    text = (FIXTURES / "precise_coeffs.mps").read_text()
    sanitized, _ = anonymize_mps_text(text)
    for token in ("0.30000000000001", "1.0000000000000002", "-2.5E+3", "1e-07",
                  "9.999999999e-01", "+3.25e2", "0.1000000000000001", "-1E-9",
                  "1.7976931348623157e+308", "2.2250738585072014E-308"):
        assert token in sanitized


def test_second_free_row_becomes_constraint():
    text = (FIXTURES / "multi_nrow.mps").read_text()
    sanitized, nm = anonymize_mps_text(text)
    assert nm.generic_to_original["OBJ"] == "PRIMARYOBJ"
    assert nm.generic_to_original["CON1"] == "SECONDFREE"
    assert parse_mps(sanitized).objective_name == "OBJ"


def test_deanonymize_solution_line():
    _, nm = anonymize_mps_text((FIXTURES / "afiro_style.mps").read_text())
    restored = deanonymize_text("X1 = 4.0\n", nm)
    assert restored == "MAKEWIDGET = 4.0\n"


def test_deanonymize_token_boundaries():
    nm = NameMap()
    nm.add_variable("FIRSTVAR")  # X1
    assert deanonymize_text("X1 X12 aX1 X1b (X1)", nm) == "FIRSTVAR X12 aX1 X1b (FIRSTVAR)"


def test_unknown_tokens_pass_through():
    nm = NameMap()
    nm.add_variable("ONLY")
    text = "X1 X99 CON5 OBJ"
    assert deanonymize_text(text, nm) == "ONLY X99 CON5 OBJ"


# -- verify_map


def test_verify_map_roundtrip(tmp_path):
    src = tmp_path / "m.mps"
    src.write_text((FIXTURES / "afiro_style.mps").read_text())
    out, nm = anonymize(src, "mps")
    assert verify_map(nm, src) is True
    src.write_text(src.read_text().replace("MAKEWIDGET", "RENAMED"))
    assert verify_map(nm, src) is False


def test_verify_map_truncated_file_is_parse_error(tmp_path):
    src = tmp_path / "m.mps"
    src.write_text((FIXTURES / "afiro_style.mps").read_text())
    _, nm = anonymize(src, "mps")
    map_file = tmp_path / "m.mps.namemap"
    assert map_file.is_file()
    map_file.write_text("garbage with no header\n")
    with pytest.raises(SanitizerError):
        NameMap.load(map_file)


def test_map_file_format(tmp_path):
    src = tmp_path / "m.mps"
    src.write_text((FIXTURES / "afiro_style.mps").read_text())
    _, nm = anonymize(src, "mps")
    loaded = NameMap.load(tmp_path / "m.mps.namemap")
    assert loaded.generic_to_original == nm.generic_to_original
    assert loaded.digest == file_digest(src)


# -- structural isomorphism over every fixture


def mps_structure(model, row_name, col_name):
    coeffs = {(row_name(r), col_name(c)): v for (r, c), v in model.coefficients().items()}
    senses = {row_name(n): s for s, n in model.rows}
    rhs = sorted((row_name(r), float(v)) for _, r, v in model.rhs)
    ranges = sorted((row_name(r), float(v)) for _, r, v in model.ranges)
    bounds = sorted(
        (b, col_name(c), float(v) if v is not None else None) for b, _, c, v in model.bounds
    )
    integers = {col_name(c) for c in model.integer_columns()}
    return coeffs, senses, rhs, ranges, bounds, integers


@pytest.mark.parametrize("fixture", MPS_FIXTURES, ids=lambda p: p.name)
def test_mps_isomorphism(fixture):
    text = fixture.read_text()
    sanitized, nm = anonymize_mps_text(text)
    orig = parse_mps(text)
    san = parse_mps(sanitized)
    var_map = nm.original_by_partition["variables"]
    con_map = dict(nm.original_by_partition["constraints"])
    if orig.objective_name:
        con_map[orig.objective_name] = "OBJ"
    ident = lambda n: n
    a = mps_structure(orig, lambda r: con_map.get(r, r), lambda c: var_map.get(c, c))
    b = mps_structure(san, ident, ident)
    assert a == b


def lp_structure(model, var_name, con_name):
    obj = {var_name(v): c for v, c in model.folded_terms(model.objective_terms).items()}
    cons = sorted(
        (con_name(c.label) if c.label else f"#anon{i}", c.sense, c.rhs_value(),
         tuple(sorted((var_name(v), coef) for v, coef in model.folded_terms(c.terms).items())))
        for i, c in enumerate(model.constraints)
    )
    bounds = sorted(
        (var_name(b.var), b.free,
         b.lo_sign * float(b.lo_text) if b.lo_text not in (None, "inf") else b.lo_text,
         b.up_sign * float(b.up_text) if b.up_text not in (None, "inf") else b.up_text,
         b.fix_sign * float(b.fix_text) if b.fix_text is not None else None)
        for b in model.bounds
    )
    return model.sense, obj, cons, bounds, \
        {var_name(v) for v in model.generals}, {var_name(v) for v in model.binaries}


@pytest.mark.parametrize("fixture", LP_FIXTURES, ids=lambda p: p.name)
def test_lp_isomorphism(fixture):
    text = fixture.read_text()
    sanitized, nm = anonymize_lp_text(text)
    orig = parse_lp(text)
    san = parse_lp(sanitized)
    vm = nm.original_by_partition["variables"]
    cm = nm.original_by_partition["constraints"]
    a = lp_structure(orig, lambda v: vm.get(v, v), lambda c: cm.get(c, c))
    b = lp_structure(san, lambda v: v, lambda c: c)
    assert a == b


@pytest.mark.parametrize("fixture", MPS_FIXTURES + LP_FIXTURES, ids=lambda p: p.name)
def test_idempotence(fixture):
    text = fixture.read_text()
    if fixture.suffix == ".mps":
        once, _ = anonymize_mps_text(text)
        twice, nm2 = anonymize_mps_text(once)
    else:
        once, _ = anonymize_lp_text(text)
        twice, nm2 = anonymize_lp_text(once)
    assert twice == once
    for generic, original in nm2.generic_to_original.items():
        assert generic == original  # generic names map to themselves


@pytest.mark.parametrize("fixture", MPS_FIXTURES + LP_FIXTURES, ids=lambda p: p.name)
def test_no_identifier_substring_survives(fixture):
    text = fixture.read_text()
    if fixture.suffix == ".mps":
        sanitized, nm = anonymize_mps_text(text)
    else:
        sanitized, nm = anonymize_lp_text(text)
    for original in nm.generic_to_original.values():
        if re.fullmatch(r"[-+0-9.eE]+", original):
            continue  # numeric-literal-shaped names excluded by design
        assert original not in sanitized, f"{original!r} survived in {fixture.name}"


@pytest.mark.parametrize("fixture", MPS_FIXTURES, ids=lambda p: p.name)
def test_reserialization_semantically_identical(fixture):
    text = fixture.read_text()
    model = parse_mps(text)
    again = parse_mps(write_mps(model))
    assert again.coefficients() == model.coefficients()
    assert again.rows == model.rows
    assert again.integer_columns() == model.integer_columns()


def test_text_roundtrip_fuzz():
    """Forward-replace mapped names, deanonymize, recover the original text."""
    _, nm = anonymize_mps_text((FIXTURES / "afiro_style.mps").read_text())
    originals = list(nm.generic_to_original.values())
    forward = {o: g for g, o in nm.generic_to_original.items()}
    rng = random.Random(7)
    for _ in range(200):
        words = [rng.choice(originals + ["=", "4.0", "value", "->"])
                 for _ in range(rng.randint(1, 12))]
        text = " ".join(words)
        replaced = " ".join(forward.get(w, w) for w in words)
        assert deanonymize_text(replaced, nm) == text


# -- solve equivalence on the tiny LPs


def lp_to_linprog(model):
    from scipy.optimize import linprog

    variables = model.variable_order()
    index = {v: i for i, v in enumerate(variables)}
    c = [0.0] * len(variables)
    for v, coef in model.folded_terms(model.objective_terms).items():
        c[index[v]] = coef
    sign = 1.0 if model.sense == "min" else -1.0
    c = [sign * x for x in c]
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for con in model.constraints:
        row = [0.0] * len(variables)
        for v, coef in model.folded_terms(con.terms).items():
            row[index[v]] = coef
        rhs = con.rhs_value()
        if con.sense == "<=":
            a_ub.append(row)
            b_ub.append(rhs)
        elif con.sense == ">=":
            a_ub.append([-x for x in row])
            b_ub.append(-rhs)
        else:
            a_eq.append(row)
            b_eq.append(rhs)
    bounds = [(0.0, None)] * len(variables)
    for b in model.bounds:
        i = index[b.var]
        if b.free:
            bounds[i] = (None, None)
        elif b.fix_text is not None:
            v = b.fix_sign * float(b.fix_text)
            bounds[i] = (v, v)
        else:
            lo, up = bounds[i]
            if b.lo_text is not None:
                lo = None if b.lo_text == "inf" else b.lo_sign * float(b.lo_text)
            if b.up_text is not None:
                up = None if b.up_text == "inf" else b.up_sign * float(b.up_text)
            bounds[i] = (lo, up)
    res = linprog(c, A_ub=a_ub or None, b_ub=b_ub or None,
                  A_eq=a_eq or None, b_eq=b_eq or None, bounds=bounds, method="highs")
    assert res.status == 0, f"LP not solved: {res.message}"
    objective = sign * res.fun
    return objective, {v: res.x[index[v]] for v in variables}


@pytest.mark.parametrize("fixture", TINY_LPS, ids=lambda p: p.name)
def test_solve_equivalence_roundtrip(fixture, tmp_path):
    text = fixture.read_text()
    sanitized, nm = anonymize_lp_text(text)
    obj_orig, sol_orig = lp_to_linprog(parse_lp(text))
    obj_san, sol_san = lp_to_linprog(parse_lp(sanitized))
    assert math.isclose(obj_orig, obj_san, rel_tol=0, abs_tol=1e-6)
    # write the sanitized solution, de-anonymize it, compare value multisets
    sol_file = tmp_path / "solution.txt"
    sol_file.write_text("".join(f"{v} = {x:.10f}\n" for v, x in sorted(sol_san.items())))
    nm.digest = ""  # solution text was not generated from the model file
    restored = deanonymize(sol_file, nm, output_path=tmp_path / "restored.txt")
    parsed = {}
    for line in restored.read_text().splitlines():
        name, _, value = line.partition(" = ")
        parsed[name] = float(value)
    assert set(parsed) == set(sol_orig)
    orig_multiset = sorted(round(v, 6) for v in sol_orig.values())
    rest_multiset = sorted(round(v, 6) for v in parsed.values())
    assert orig_multiset == rest_multiset


# -- error reporting


def test_parse_error_has_line_numbers():
    with pytest.raises(SanitizerError, match="line 4"):
        parse_mps("NAME X\nROWS\n N OBJ\n BAD-SENSE ROWX\nENDATA\n")


def test_lp_parse_error_position():
    with pytest.raises(SanitizerError, match="line"):
        parse_lp("Minimize\n obj: 2 x1\nSubject To\n c1: x1 <=\nEnd\n")
    with pytest.raises(SanitizerError, match="line 2"):
        parse_lp("Minimize\n obj: 2 ** x1\nSubject To\nEnd\n")


def test_detect_format_rejects_nl(tmp_path):
    f = tmp_path / "model.nl"
    f.write_text("binary gibberish")
    with pytest.raises(SanitizerError, match="mps, lp"):
        detect_format(f)
