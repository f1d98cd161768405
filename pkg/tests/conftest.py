import numpy as np
import pytest

from tkgrule.core import TkgDataset, augment_inverses


def build_dataset(train, valid=(), test=()):
    """Augmented dataset from ``(s, r, o, begin, end)`` name tuples."""
    ents, rels = {}, {}
    splits = {}
    for name, rows in (("train", train), ("valid", valid), ("test", test)):
        out = []
        for s, r, o, b, e in rows:
            out.append((ents.setdefault(s, len(ents)), rels.setdefault(r, len(rels)), ents.setdefault(o, len(ents)), b, e))
        splits[name] = np.array(out, dtype=np.int64).reshape(-1, 5)
    ds = TkgDataset(list(ents), list(rels), len(rels), splits)
    return augment_inverses(ds)


def random_toy(seed, max_entities=6, max_relations=3, max_years=5, num_facts=None):
    """Small random TKG with integer-named entities and relations."""
    rng = np.random.default_rng(seed)
    E = int(rng.integers(3, max_entities + 1))
    R = int(rng.integers(1, max_relations + 1))
    Y = int(rng.integers(2, max_years + 1))
    years = 2000 + np.sort(rng.choice(10, size=Y, replace=False))
    n = num_facts or int(rng.integers(4, 11))
    facts = set()
    while len(facts) < n:
        s, o = rng.choice(E, size=2, replace=False)
        b, e = sorted(rng.choice(years, size=2))
        facts.add((f"e{s}", f"r{rng.integers(R)}", f"e{o}", int(b), int(e)))
    facts = sorted(facts)
    # Make sure at least two distinct years are present.
    facts.append(("e0", "r0", "e1", int(years[0]), int(years[-1])))
    return build_dataset(sorted(set(facts)))


# Three players, a marriage and two birthplaces around the head fact wBi(David, London, T6).
BIRTHPLACE = [
    ("David", "pF", "ManUtd", 1992, 2003),
    ("David", "pF", "RealMadrid", 2003, 2007),
    ("David", "pF", "LAGalaxy", 2007, 2012),
    ("David", "iMt", "Victoria", 1999, 2023),
    ("Victoria", "wBi", "London", 1974, 1974),
    ("David", "wBi", "London", 1975, 1975),
]

DAHLEM = [
    ("Franz Dahlem", "isMarriedTo", "Kathe Dahlem", 1899, 1974),
    ("Kathe Dahlem", "isAffiliatedTo", "Communist Party of Germany", 1920, 1946),
    ("Franz Dahlem", "isAffiliatedTo", "Communist Party of Germany", 1920, 1946),
    ("Franz Dahlem", "wasBornIn", "Rixheim", 1892, 1892),
    ("Kathe Dahlem", "wasBornIn", "Berlin", 1901, 1901),
]

HANOVER = [
    ("Donna Hanover", "isMarriedTo", "Rudy Giuliani", 1984, 2002),
    ("Rudy Giuliani", "isMarriedTo", "Donna Hanover", 1984, 2002),
    ("Rudy Giuliani", "isMarriedTo", "Judith Nathan", 2003, 2019),
    ("Judith Nathan", "isMarriedTo", "Rudy Giuliani", 2003, 2019),
    ("Rudy Giuliani", "wasBornIn", "Brooklyn", 1944, 1944),
]


@pytest.fixture
def birthplace():
    return build_dataset(BIRTHPLACE)


@pytest.fixture
def dahlem():
    return build_dataset(DAHLEM)


@pytest.fixture
def hanover():
    return build_dataset(HANOVER)


# ---------------------------------------------------------------------------
# Acceptance reporting: one PASS/FAIL line per criterion at the end of the run

_CRITERIA: list[tuple[str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None and report.when == "call":
        _CRITERIA.append((marker.args[0], "PASS" if report.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in _CRITERIA:
        terminalreporter.write_line(f"{status}  {name}")
