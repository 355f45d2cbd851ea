import csv

import pytest

from composite_spde import checks
from composite_spde.kernel import CompositeMedium


@pytest.fixture(scope="module")
def rows():
    return checks.run_checks(semigroup_samples=5)


def test_all_checks_pass_on_default_media(rows):
    failed = [(r.check_name, r.medium_id, r.max_abs_error) for r in rows if not r.passed]
    assert failed == []


def test_every_medium_gets_every_check(rows):
    names = {r.check_name for r in rows}
    for m in checks.DEFAULT_MEDIA:
        mine = {r.check_name for r in rows if r.medium_id == checks.medium_id(m)}
        expected = names if m.is_homogeneous else names - {"homogeneous_reduction"}
        assert mine == expected


def test_exponent_with_min_inverse_diffusivity_in_denominator_is_not_a_bound():
    assert checks.literal_bound_violations(CompositeMedium(1, 4)) > 0
    assert checks.literal_bound_violations(CompositeMedium(1, 1)) == 0


def test_checks_csv_layout(tmp_path):
    m = CompositeMedium(1, 4, 1, 2)
    rows = [checks.check_mass(m), checks.check_interface_jump(m)]
    checks.write_checks_csv(rows, tmp_path / "c.csv")
    with open(tmp_path / "c.csv") as fh:
        table = list(csv.reader(fh))
    assert table[0] == ["check_name", "medium_id", "max_abs_error", "tolerance", "pass"]
    assert [r[4] for r in table[1:]] == ["pass", "pass"]
    assert table[1][1] == "a1=1;a2=4;rho1=1;rho2=2"


def test_failing_row_is_reported():
    row = checks._row("demo", CompositeMedium(1, 1), 2.0, 1.0)
    assert not row.passed
    assert not checks._row("demo", CompositeMedium(1, 1), float("nan"), 1.0).passed
