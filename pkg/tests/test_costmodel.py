import pytest
from hypothesis import given, strategies as st

from spikesched.costmodel import (
    ArrayConfig,
    ConvShape,
    FcShape,
    cycles_per_tile,
    n_tiles,
    network_cost,
    task_dims,
)
from spikesched.errors import StructuralError

TABLE6 = {
    "conv1": (13916, 6334, 0),
    "conv2": (6566, 4890, 6566),
    "fc1": (1816, 3640, 2470),
    "out": (190, 280, 288),
}


def test_table6_exact(mnist_costs):
    got = dict(zip(mnist_costs.layer_names, mnist_costs.cycles))
    assert got == TABLE6
    assert mnist_costs.first_ig_raw == 26264
    assert mnist_costs.n_total == 46956


def test_conv_fp_dims_mnist_conv1():
    shape = ConvShape(h=30, w=30, c=1, k=3, f=8, t=8, b=1, pad=1)
    assert task_dims(shape, "FP") == (28 * 28 * 8, 8, 9)
    assert task_dims(shape, "WG") == (9, 8, 28 * 28 * 8)
    assert task_dims(shape, "IG") == (28 * 28 * 8, 1, 72)


def test_fc_wg_dims_mnist_fc1():
    shape = FcShape(q_in=392, q_out=128, t=8, b=1)
    assert task_dims(shape, "WG") == (392, 128, 8)
    assert task_dims(shape, "FP") == (8, 128, 392)
    assert task_dims(shape, "IG") == (8, 392, 128)


def test_single_output_row():
    shape = ConvShape(h=3, w=3, c=2, k=3, f=4, t=1, b=1, pad=0)
    rows, _, _ = task_dims(shape, "FP")
    assert rows == 1


def test_n_tiles_examples():
    a = ArrayConfig(32, 32)
    assert n_tiles(6272, 8, a) == 196
    assert n_tiles(1, 1, a) == 1
    assert n_tiles(33, 33, a) == 4


def test_cycles_per_tile_examples():
    a = ArrayConfig(32, 32)
    assert cycles_per_tile(9, a) == 71
    assert cycles_per_tile(1, ArrayConfig(1, 1)) == 1
    assert cycles_per_tile(392, a) == 454


@given(st.integers(1, 500), st.integers(1, 500),
       st.integers(1, 64), st.integers(1, 64), st.integers(1, 3), st.integers(1, 3))
def test_bigger_array_never_more_tiles(rows, cols, s_r, s_c, grow_r, grow_c):
    small = ArrayConfig(s_r, s_c)
    big = ArrayConfig(s_r * grow_r, s_c * grow_c)
    assert n_tiles(rows, cols, big) <= n_tiles(rows, cols, small)


@given(st.integers(1, 1000), st.integers(1, 64), st.integers(1, 64),
       st.integers(0, 16), st.integers(0, 16))
def test_skew_grows_exactly_with_array(mac, s_r, s_c, add_r, add_c):
    base = cycles_per_tile(mac, ArrayConfig(s_r, s_c))
    grown = cycles_per_tile(mac, ArrayConfig(s_r + add_r, s_c + add_c))
    assert grown == base + add_r + add_c


@given(st.integers(2, 30), st.integers(1, 3), st.integers(1, 4), st.integers(1, 8),
       st.integers(1, 8), st.integers(1, 4), st.sampled_from([8, 16, 32, 64]))
def test_work_lower_bounds(hw, k, c, f, t, b, s):
    if hw < k:
        hw = k
    shape = ConvShape(h=hw, w=hw, c=c, k=k, f=f, t=t, b=b, pad=0)
    array = ArrayConfig(s, s)
    for task in ("FP", "WG", "IG"):
        rows, cols, mac = task_dims(shape, task)
        total = n_tiles(rows, cols, array) * cycles_per_tile(mac, array)
        assert total >= mac
        assert total >= rows * cols * mac / (s * s)


def test_batch_scaling_mnist(mnist_net):
    a = ArrayConfig(32, 32)
    c1 = network_cost(mnist_net, a, 1)
    c8 = network_cost(mnist_net, a, 8)
    # every task grows, and by roughly the batch factor as shapes grow
    for l in range(c1.n_layers):
        for k in ("FP", "WG", "IG"):
            if c1.task(l, k) == 0:
                continue
            ratio = c8.task(l, k) / c1.task(l, k)
            assert 1.0 < ratio <= 8.0 + 1e-9
    assert c8.task(0, "FP") == 8 * c1.task(0, "FP")  # tiling divides evenly here


def test_cost_requires_valid_batch(mnist_net):
    with pytest.raises(StructuralError):
        network_cost(mnist_net, ArrayConfig(32, 32), 0)


def test_quanta_divide_tasks(mnist_costs):
    for l in range(mnist_costs.n_layers):
        for k in ("FP", "WG", "IG"):
            cycles = mnist_costs.task(l, k)
            if cycles:
                assert cycles % mnist_costs.quantum(l, k) == 0


def test_nmnist_and_dvs_totals(nmnist_net, dvs_net):
    # spot values derived from the same tiling rules
    c = network_cost(nmnist_net, ArrayConfig(32, 32), 1)
    assert c.task(0, "IG") == 0
    assert c.n_total == sum(sum(row) for row in c.cycles)
    c2 = network_cost(dvs_net, ArrayConfig(32, 32), 1)
    assert c2.n_layers == 8
    assert max(c2.task(l, "WG") for l in range(8)) == c2.task(5, "WG")
