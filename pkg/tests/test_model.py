import numpy as np
import pytest

from actir import model as M
from actir.datagen import domain_rng


def make(seed=0, domains=("a", "b")):
    return M.init_model(M.RepSplit(2, 6), [2, 8, 8, 8], domain_rng(seed, "init"), domains=domains)


def test_base_head_structure():
    p = make()
    expected = np.zeros((2, 8))
    expected[0, 0] = expected[1, 1] = 1.0
    assert np.array_equal(p.w_base, expected)
    assert all(np.array_equal(w, np.zeros((2, 8))) for w in p.w_domain.values())


def test_init_fan_in_bounds():
    p = make()
    for (w, b), fan_in in zip(p.phi, [2, 8, 8]):
        assert np.all(np.abs(w) <= 1 / np.sqrt(fan_in)) and np.all(np.abs(b) <= 1 / np.sqrt(fan_in))


def test_same_seed_same_init():
    a, b = make(3), make(3)
    assert all(np.array_equal(x, y) for x, y in zip(a.named_trainable().values(), b.named_trainable().values()))
    c = make(4)
    assert not np.array_equal(a.phi[0][0], c.phi[0][0])


@pytest.mark.parametrize(
    "split,sizes",
    [((2, 6), [2, 8, 7]), ((2, 6), [8]), ((2, 6), [2, 0, 8])],
)
def test_init_rejects_bad_sizes(split, sizes):
    with pytest.raises(ValueError):
        M.init_model(M.RepSplit(*split), sizes, domain_rng(0, "x"))


def test_split_validation():
    with pytest.raises(ValueError):
        M.RepSplit(1, 6)
    with pytest.raises(ValueError):
        M.RepSplit(2, 0)
    assert M.RepSplit(2, 6).width == 8


def single_layer(phi_out):
    """A model whose representation is the constant ``phi_out``."""
    split = M.RepSplit(2, len(phi_out) - 2)
    p = M.init_model(split, [1, len(phi_out)], domain_rng(0, "c"), domains=["e"])
    p.phi[0] = (np.zeros((len(phi_out), 1)), np.array(phi_out, dtype=float))
    return p


def test_invariant_logits_take_first_k():
    p = single_layer([0.3, -0.1, 5, 5, 5, 5, 5, 5])
    assert M.invariant_logits(p, [[1.0]]).tolist() == [[0.3, -0.1]]
    q = single_layer([0.3, -0.1, -9, 1, 2, 3, 4, 100])
    assert np.array_equal(M.invariant_logits(p, [[1.0]]), M.invariant_logits(q, [[1.0]]))


def test_domain_logits_cases(rng):
    p = make()
    x = rng.normal(size=(5, 2))
    assert np.array_equal(M.domain_logits(p, "a", x), M.invariant_logits(p, x))
    p.w_domain["a"] = -p.w_base
    assert np.array_equal(M.domain_logits(p, "a", x), np.zeros((5, 2)))
    w = rng.normal(size=(2, 8))
    p.w_domain["b"] = w
    phi = M.representation(p, x)
    np.testing.assert_allclose(M.domain_logits(p, "b", x), phi @ (p.w_base + w).T, atol=1e-12)
    np.testing.assert_allclose(M.domain_logits(p, "b", x) - M.invariant_logits(p, x), phi @ w.T, atol=1e-12)


def test_unknown_domain():
    with pytest.raises(KeyError, match="zzz"):
        M.domain_logits(make(), "zzz", [[0.0, 0.0]])


def test_width_mismatch():
    with pytest.raises(ValueError, match="input width"):
        M.representation(make(), [[1.0, 2.0, 3.0]])


def test_argmax_shift_invariance(rng):
    logits = rng.normal(size=(20, 2))
    assert np.array_equal(np.argmax(logits, 1), np.argmax(logits + 3.7, 1))


def test_named_trainable_excludes_base_and_replace():
    p = make()
    names = list(p.named_trainable())
    assert names == ["phi.0.w", "phi.0.b", "phi.1.w", "phi.1.b", "phi.2.w", "phi.2.b", "head.a", "head.b"]
    q = p.replace({"head.a": np.ones((2, 8))})
    assert np.array_equal(q.w_domain["a"], np.ones((2, 8))) and np.array_equal(p.w_domain["a"], np.zeros((2, 8)))
    assert q.w_base is p.w_base


def test_checkpoint_round_trip(tmp_path, rng):
    p = make()
    p.w_domain["a"] = rng.normal(size=(2, 8)) / 3
    M.save_checkpoint(p, tmp_path / "m.json")
    q = M.load_checkpoint(tmp_path / "m.json")
    for (a, b), (c, d) in zip(p.phi, q.phi):
        assert a.tobytes() == c.tobytes() and b.tobytes() == d.tobytes()
    assert q.w_domain["a"].tobytes() == p.w_domain["a"].tobytes()
    assert q.split == p.split and q.w_base.tobytes() == p.w_base.tobytes()


def test_checkpoint_rejects_inconsistent_sizes():
    d = M.to_dict(make())
    d["layer_sizes"] = [2, 8, 8, 9]
    with pytest.raises(ValueError):
        M.from_dict(d)
