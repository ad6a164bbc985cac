import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracle
from pcrampim import tensorio
from pcrampim.activation import maxpool, relu8
from pcrampim.compiler import bind_weights, parse_topology, random_input, random_weights
from pcrampim.config import SimConfig
from pcrampim.errors import ValidationError
from pcrampim.runtime import compare, run_direct, run_reference, run_stochastic
from pcrampim.tensorio import SignedTensor


def test_relu8():
    assert [relu8(x) for x in (-5, 0, 100, 255, 300)] == [0, 0, 100, 255, 255]


def test_maxpool():
    assert maxpool([12, 200, 7, 99]) == 200
    assert maxpool([9] * 9) == 9
    assert maxpool([0, 0, 0, 255], 4) == 255
    with pytest.raises(ValidationError):
        maxpool([1, 2, 3])
    with pytest.raises(ValidationError):
        maxpool([1, 2, 3, 4], 9)


@pytest.fixture(scope="module")
def fixture_net():
    import os
    data = os.path.join(os.path.dirname(__file__), "data")
    with open(os.path.join(data, "fixture_topology.txt")) as fh:
        net = parse_topology(fh.read())
    net = bind_weights(net, tensorio.load(os.path.join(data, "fixture_weights.bin")))
    x = tensorio.load(os.path.join(data, "fixture_input.bin"))["input"]
    return net, x


def _net(text, shape=None, seed=0, **kw):
    net = parse_topology(text, shape)
    return net.with_weights(random_weights(net, seed, **kw))


class TestFixtureGolden:
    def test_tree(self, fixture_net, oracle_values):
        net, x = fixture_net
        res = run_stochastic(net, x)
        assert res.output.tolist() == oracle_values["fixture_tree"]

    def test_sequential(self, fixture_net, oracle_values):
        net, x = fixture_net
        cfg = SimConfig(accumulation_mode="sequential")
        assert run_stochastic(net, x, cfg).output.tolist() == oracle_values["fixture_sequential"]
        assert run_direct(net, x, cfg).tolist() == oracle_values["fixture_sequential"]

    def test_reference(self, fixture_net, oracle_values):
        net, x = fixture_net
        assert run_reference(net, x).tolist() == oracle_values["fixture_reference"]

    def test_compare_pinned(self, fixture_net, oracle_values):
        net, x = fixture_net
        m = compare(run_stochastic(net, x).output, run_reference(net, x))
        tree = np.array(oracle_values["fixture_tree"])
        ref = np.array(oracle_values["fixture_reference"])
        assert m == {"max_abs_diff": int(np.abs(tree - ref).max()),
                     "mean_abs_diff": float(np.abs(tree - ref).mean()),
                     "top1_agreement": float(tree.argmax() == ref.argmax()), "size": 4}


class TestStochastic:
    def test_zero_weights(self):
        net = parse_topology("conv3x2-pool-18-5", (8, 8, 1))
        w = {k: SignedTensor.unsigned(np.zeros(v.shape, dtype=np.int64))
             for k, v in random_weights(net, 0).items()}
        net = net.with_weights(w)
        out = run_stochastic(net, random_input((8, 8, 1), 3)).output
        assert not out.any()

    def test_single_neuron_w255(self, oracle_values):
        net = parse_topology("1-1").with_weights({"layer1.weight": SignedTensor.unsigned(np.array([[255]]))})
        got = [int(run_direct(net, np.array([v]))[0]) for v in range(256)]
        assert got == oracle_values["neuron_w255"]
        assert max(abs(g - v) for v, g in enumerate(got)) <= 1
        for v in (0, 1, 128, 255):
            assert int(run_stochastic(net, np.array([v])).output[0]) == got[v]

    @pytest.mark.parametrize("mode", ["tree", "sequential"])
    @pytest.mark.parametrize("text,shape", [
        ("70-33-5", None),
        ("conv3x3-pool-48-7", (10, 10, 2)),
        ("conv3x4-pool3-16-3", (8, 8, 1)),
        ("conv1x3-conv3x2-72-4", (6, 6, 2)),
    ])
    def test_engine_equals_direct(self, text, shape, mode):
        cfg = SimConfig(accumulation_mode=mode)
        net = _net(text, shape, seed=len(text))
        x = random_input(net.input_shape, 5)
        assert np.array_equal(run_stochastic(net, x, cfg).output, run_direct(net, x, cfg))

    def test_long_fan_in_chunks(self):
        net = _net("200-3", seed=9, max_magnitude=40)
        x = random_input((200,), 2)
        assert np.array_equal(run_stochastic(net, x).output, run_direct(net, x))

    def test_account_false_same_output(self):
        net = _net("40-20-6", seed=4)
        x = random_input((40,), 4)
        assert np.array_equal(run_stochastic(net, x, account=False).output,
                              run_stochastic(net, x, workers=3).output)

    def test_matches_oracle_neuron(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            n = int(rng.integers(1, 33))
            a = rng.integers(0, 256, size=n)
            w = rng.integers(-255, 256, size=n)
            net = parse_topology(f"{n}-1").with_weights(
                {"layer1.weight": SignedTensor.from_signed(w.reshape(1, n))})
            got = int(run_stochastic(net, a).output[0])
            assert got == oracle.neuron(a.tolist(), w.tolist())

    def test_sign_correctness(self):
        net = _net("24-10", seed=3, negative_fraction=0.0)
        x = random_input((24,), 8)
        res = run_stochastic(net, x)
        s2b = [c for _, seg in res.lowered.stream.segments() for c in seg if c.kind == "S_TO_B"]
        assert all(c.aux == () for c in s2b)
        w = net.weights["layer1.weight"].values()
        assert (w @ x.values() >= 0).all()

    def test_input_checks(self):
        net = _net("4-2")
        with pytest.raises(ValidationError):
            run_stochastic(net, np.arange(5))
        with pytest.raises(ValidationError):
            run_stochastic(net, SignedTensor.from_signed(np.array([1, -2, 3, 4])))
        with pytest.raises(ValidationError):
            run_reference(net, np.array([1, 2, 3, 256]))


class TestReference:
    def test_hand_2x2(self):
        net = parse_topology("2-2").with_weights(
            {"layer1.weight": SignedTensor.from_signed(np.array([[1, 2], [3, 4]]))})
        # (1*10 + 2*20) >> 9 = 0 and (3*10 + 4*20) >> 9 = 0
        assert run_reference(net, np.array([10, 20])).tolist() == [0, 0]
        net = parse_topology("2-2").with_weights(
            {"layer1.weight": SignedTensor.from_signed(np.array([[100, 200], [255, -50]]))})
        # 40000 >> 9 = 78 -> 156; 46000 >> 9 = 89 -> 178
        assert run_reference(net, np.array([200, 100])).tolist() == [156, 178]

    def test_negative_sum_clips(self):
        net = parse_topology("2-1").with_weights(
            {"layer1.weight": SignedTensor.from_signed(np.array([[-200, 3]]))})
        assert run_reference(net, np.array([255, 1])).tolist() == [0]

    def test_zero_input(self):
        net = _net("conv3x3-pool-27-4", (8, 8, 1), seed=2)
        assert not run_reference(net, np.zeros((8, 8, 1), dtype=int)).any()

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 40), st.integers(1, 6), st.integers(0, 2 ** 20))
    def test_brute_force(self, nin, nout, seed):
        net = _net(f"{nin}-{nout}", seed=seed)
        x = random_input((nin,), seed + 1).values().tolist()
        w = net.weights["layer1.weight"].values().tolist()
        want = [oracle.reference(x, row) for row in w]
        assert run_reference(net, np.array(x)).tolist() == want

    def test_conv_brute_force(self):
        net = _net("conv3x2-pool-8-3", (6, 6, 1), seed=12)
        x = random_input((6, 6, 1), 12).values()[:, :, 0]
        wc = net.weights["layer0.weight"].values()
        conv = np.zeros((4, 4, 2), dtype=np.int64)
        for y in range(4):
            for xx in range(4):
                for co in range(2):
                    acts = x[y:y + 3, xx:xx + 3].reshape(-1).tolist()
                    conv[y, xx, co] = oracle.reference(acts, wc[co, :, :, 0].reshape(-1).tolist())
        pooled = conv.reshape(2, 2, 2, 2, 2).max(axis=(1, 3)).reshape(-1)
        wf = net.weights["layer3.weight"].values()
        want = [oracle.reference(pooled.tolist(), row.tolist()) for row in wf]
        assert run_reference(net, x.reshape(6, 6, 1)).tolist() == want

    def test_permutation_equivariance(self):
        net = _net("12-7", seed=6)
        x = random_input((12,), 6)
        perm = np.random.default_rng(0).permutation(7)
        wt = net.weights["layer1.weight"]
        permuted = net.with_weights({"layer1.weight": SignedTensor(wt.magnitude[perm], wt.negative[perm])})
        assert run_reference(permuted, x).tolist() == run_reference(net, x)[perm].tolist()


class TestCompare:
    def test_identical(self):
        a = np.arange(6)
        assert compare(a, a) == {"max_abs_diff": 0, "mean_abs_diff": 0.0, "top1_agreement": 1.0, "size": 6}

    def test_one_lane(self):
        a = np.array([5, 9, 2])
        b = np.array([5, 2, 2])
        m = compare(a, b)
        assert m["max_abs_diff"] == 7 and m["top1_agreement"] == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            compare(np.zeros(3), np.zeros(4))
