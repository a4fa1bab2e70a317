"""End-to-end acceptance criteria C1 to C10, each at its stated tolerance."""
import pytest

from modelcollapse import acceptance


@pytest.mark.slow
@pytest.mark.parametrize("cid", list(acceptance.CRITERIA))
def test_criterion(cid, capsys):
    result = acceptance.run_criterion(cid)
    with capsys.disabled():
        print(f"\n{result.line()}")
    assert result.passed, result.line()


def test_suites_cover_every_criterion():
    named = {cid for name, ids in acceptance.SUITES.items() if name != "all" for cid in ids}
    assert named == set(acceptance.CRITERIA)
    assert acceptance.SUITES["all"] == tuple(acceptance.CRITERIA)
