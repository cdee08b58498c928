import numpy as np
import pytest

from n2b.networks import DnNet, NENet, build_dnnet, build_nenet
from n2b.tensor import ShapeError, Tensor


def conv_params(cin, cout, k=3):
    return cout * cin * k * k + cout


class TestDnNet:
    def test_preserves_shape(self):
        net = DnNet(channels_in=1, depth=3, base_width=8, seed=0)
        x = Tensor(np.random.default_rng(0).random((2, 1, 32, 32)).astype(np.float32))
        assert net(x).shape == (2, 1, 32, 32)

    def test_preserves_shape_rgb(self):
        net = DnNet(channels_in=3, depth=2, base_width=8, seed=0)
        x = Tensor(np.random.default_rng(1).random((1, 3, 16, 24)).astype(np.float32))
        assert net(x).shape == (1, 3, 16, 24)

    def test_rejects_indivisible_dims(self):
        net = DnNet(channels_in=1, depth=3, base_width=8, seed=0)
        x = Tensor(np.zeros((1, 1, 30, 32), dtype=np.float32))
        with pytest.raises(ShapeError):
            net(x)

    def test_seeded_init_deterministic(self):
        a = DnNet(depth=2, base_width=8, seed=5)
        b = DnNet(depth=2, base_width=8, seed=5)
        for (na, pa), (nb, pb) in zip(a.named_params(), b.named_params()):
            assert na == nb
            assert np.array_equal(pa.data, pb.data)

    def test_different_seeds_differ(self):
        a = DnNet(depth=2, base_width=8, seed=5)
        b = DnNet(depth=2, base_width=8, seed=6)
        assert not np.array_equal(a.params()[0].data, b.params()[0].data)

    def test_param_count_depth2(self):
        # hand count: enc0 (1->8, 8->8), enc1 (8->16, 16->16),
        # dec0 up (16->8), dec0 convs (16->8, 8->8), head (8->1)
        net = DnNet(channels_in=1, depth=2, base_width=8, seed=0)
        expected = (conv_params(1, 8) + conv_params(8, 8)
                    + conv_params(8, 16) + conv_params(16, 16)
                    + conv_params(16, 8)
                    + conv_params(16, 8) + conv_params(8, 8)
                    + conv_params(8, 1))
        assert net.param_count() == expected

    def test_param_count_depth3(self):
        net = DnNet(channels_in=1, depth=3, base_width=4, seed=0)
        expected = (conv_params(1, 4) + conv_params(4, 4)
                    + conv_params(4, 8) + conv_params(8, 8)
                    + conv_params(8, 16) + conv_params(16, 16)
                    + conv_params(16, 8)
                    + conv_params(16, 8) + conv_params(8, 8)
                    + conv_params(8, 4)
                    + conv_params(8, 4) + conv_params(4, 4)
                    + conv_params(4, 1))
        assert net.param_count() == expected

    def test_forward_deterministic(self):
        net = DnNet(depth=2, base_width=8, seed=1)
        x = Tensor(np.random.default_rng(2).random((1, 1, 16, 16)).astype(np.float32))
        assert np.array_equal(net(x).data, net(x).data)

    def test_state_round_trip(self):
        src = DnNet(depth=2, base_width=8, seed=3)
        dst = DnNet(depth=2, base_width=8, seed=4)
        dst.load_state(src.state())
        x = Tensor(np.random.default_rng(5).random((1, 1, 16, 16)).astype(np.float32))
        assert np.array_equal(src(x).data, dst(x).data)

    def test_load_state_shape_mismatch(self):
        net = DnNet(depth=2, base_width=8, seed=0)
        state = net.state().copy()
        state["head.weight"] = np.zeros((2, 8, 3, 3), dtype=np.float32)
        with pytest.raises(ValueError):
            net.load_state(state)

    def test_bad_depth(self):
        with pytest.raises(ValueError):
            DnNet(depth=0)

    def test_biases_start_at_zero(self):
        net = DnNet(depth=2, base_width=8, seed=7)
        for name, p in net.named_params():
            if name.endswith(".bias"):
                assert np.all(p.data == 0.0)


class TestNENet:
    def test_layer_widths(self):
        net = NENet(channels_in=1, seed=0)
        assert net.conv1.weight.shape == (32, 1, 3, 3)
        assert net.conv2.weight.shape == (32, 32, 3, 3)
        assert net.conv3.weight.shape == (1, 32, 3, 3)

    def test_exactly_three_layers(self):
        net = NENet(seed=0)
        names = {name for name, _ in net.named_params()}
        assert names == {"conv1.weight", "conv1.bias", "conv2.weight",
                         "conv2.bias", "conv3.weight", "conv3.bias"}

    def test_param_count(self):
        net = NENet(channels_in=1, seed=0)
        expected = conv_params(1, 32) + conv_params(32, 32) + conv_params(32, 1)
        assert net.param_count() == expected

    def test_preserves_shape_any_size(self):
        net = NENet(seed=1)
        x = Tensor(np.random.default_rng(3).random((1, 1, 17, 23)).astype(np.float32))
        assert net(x).shape == (1, 1, 17, 23)

    def test_seeded_init_deterministic(self):
        a, b = NENet(seed=9), NENet(seed=9)
        x = Tensor(np.random.default_rng(4).random((1, 1, 12, 12)).astype(np.float32))
        assert np.array_equal(a(x).data, b(x).data)


class TestBuilders:
    def test_build_dnnet(self):
        net = build_dnnet(channels_in=3, depth=2, base_width=4, seed=2)
        assert isinstance(net, DnNet)
        assert net.channels_in == 3 and net.depth == 2 and net.base_width == 4

    def test_build_nenet(self):
        net = build_nenet(channels_in=3, seed=2)
        assert isinstance(net, NENet)
        assert net.channels_in == 3
