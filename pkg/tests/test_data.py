import numpy as np
import pytest

from pomcmc import Dataset, NetworkSpec, load_dataset, load_network, sample_network_data
from pomcmc.data import builtin_network, write_dataset
from pomcmc.errors import DataFormatError


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_first_appearance_mapping(tmp_path):
    d = load_dataset(write(tmp_path, "A,B\na,x\nb,x\na,y\n"))
    assert (d.n, d.m) == (2, 3)
    assert d.arity == (2, 2)
    assert d.values.tolist() == [[0, 0], [1, 0], [0, 1]]
    assert d.labels == ("A", "B")
    assert d.categories == (("a", "b"), ("x", "y"))


def test_single_cell(tmp_path):
    d = load_dataset(write(tmp_path, "only\n"), has_header=False)
    assert (d.n, d.m, d.arity) == (1, 1, (1,))


def test_tab_separated_is_detected(tmp_path):
    d = load_dataset(write(tmp_path, "a\tb\n1\t2\n3\t2\n", "d.tsv"))
    assert d.arity == (2, 1)


@pytest.mark.parametrize(
    "text",
    ["", "a,b\n1,2\n3\n", "a,b\n1,?\n", "a,b\n1,\n", "a,b\n"],
    ids=["empty", "ragged", "missing-token", "empty-field", "header-only"],
)
def test_rejections(tmp_path, text):
    with pytest.raises(DataFormatError):
        load_dataset(write(tmp_path, text))


def test_custom_missing_token_and_dropped_columns(tmp_path):
    p = write(tmp_path, "a,b,c\nx,NA,1\ny,?,2\n")
    with pytest.raises(DataFormatError):
        load_dataset(p, missing="NA")
    d = load_dataset(p, drop_columns=[1])
    assert d.labels == ("a", "c") and d.m == 2


def test_write_read_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    d = Dataset(rng.integers(0, 3, size=(30, 4)), [3, 3, 3, 3], ("a", "b", "c", "d"))
    # A category that never appears would change the arity on reload; make sure all occur.
    d = Dataset(np.vstack([np.tile(np.arange(3), (4, 1)).T, d.values]), d.arity, d.labels)
    write_dataset(d, tmp_path / "x.csv")
    back = load_dataset(tmp_path / "x.csv")
    assert back.arity == d.arity
    # First-appearance renumbering keeps the partition of rows, which is all the scores see.
    for v in range(d.n):
        pairs = set(zip(d.values[:, v], back.values[:, v]))
        assert len(pairs) == d.arity[v]


def test_subsample_is_deterministic_and_without_replacement():
    d = Dataset(np.arange(100).reshape(100, 1) % 7, [7], ("a",))
    a, b = d.subsample(30, 5), d.subsample(30, 5)
    assert np.array_equal(a.values, b.values) and a.m == 30


def _coin(p1=0.5):
    return NetworkSpec(("x",), (2,), ((),), (np.array([[1 - p1, p1]]),))


def test_network_validation():
    with pytest.raises(DataFormatError):
        NetworkSpec(("a", "b"), (2, 2), ((1,), (0,)), ([[0.5, 0.5]] * 2, [[0.5, 0.5]] * 2))
    with pytest.raises(DataFormatError):
        NetworkSpec(("a",), (2,), ((),), ([[0.5, 0.6]],))
    with pytest.raises(DataFormatError):
        NetworkSpec(("a", "b"), (2, 2), ((), (0,)), ([[0.5, 0.5]], [[0.5, 0.5]]))


def test_deterministic_cpts_force_every_row():
    spec = NetworkSpec(
        ("a", "b", "c"), (2, 3, 2), ((), (0,), (0, 1)),
        (
            [[0.0, 1.0]],
            [[1, 0, 0], [0, 0, 1]],
            [[1, 0]] * 3 + [[1, 0], [1, 0], [0, 1]],
        ),
    )
    d = sample_network_data(spec, 200, 3)
    assert np.all(d.values == [1, 2, 1])


def test_coin_frequency():
    d = sample_network_data(_coin(), 10_000, 11)
    assert abs(d.values[:, 0].mean() - 0.5) < 0.02


def test_sampling_determinism(asia):
    a = sample_network_data(asia, 300, 9)
    b = sample_network_data(asia, 300, 9)
    assert np.array_equal(a.values, b.values) and a.digest() == b.digest()


def test_empirical_conditionals_match_cpts(asia):
    d = sample_network_data(asia, 10_000, 2)
    checked = 0
    for v in range(asia.n):
        ps = asia.parents[v]
        config = np.zeros(d.m, dtype=np.int64)
        for u in ps:
            config = config * asia.arity[u] + d.values[:, u]
        for j, row in enumerate(asia.cpt[v]):
            hit = config == j
            if hit.sum() < 200:
                continue
            freq = np.bincount(d.values[hit, v], minlength=asia.arity[v]) / hit.sum()
            assert np.all(np.abs(freq - row) < 0.03)
            checked += 1
    assert checked >= 8


def test_network_json_round_trip(tmp_path, asia):
    import json

    (tmp_path / "n.json").write_text(json.dumps(asia.to_json()))
    back = load_network(tmp_path / "n.json")
    assert back.parents == asia.parents and back.nodes == asia.nodes
    assert all(np.array_equal(a, b) for a, b in zip(back.cpt, asia.cpt))


def test_builtin_asia_shape():
    net = builtin_network("asia")
    assert net.n == 8 and len(net.arcs()) == 8
