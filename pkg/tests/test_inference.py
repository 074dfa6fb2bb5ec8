import numpy as np
import pytest
from dnres_forge.errors import ShapeError
from dnres_forge.net.topology import build_base, identity_network, insert_resblock
from dnres_forge.nn.tensor import DType
from dnres_forge.training.inference import BorderMode, block_halo, denoise_image


@pytest.mark.parametrize("border", list(BorderMode))
def test_identity_network_returns_input(rng, mixed_net, border):
    ident = identity_network(mixed_net)
    noisy = rng.uniform(size=(1, 1, 23, 31))
    assert np.array_equal(denoise_image(ident, noisy, border), noisy)


@pytest.mark.parametrize("shape", [(17, 17), (20, 45), (64, 33)])
def test_size_is_preserved(rng, shape):
    net = insert_resblock(build_base(rng), rng)
    out = denoise_image(net, rng.uniform(size=shape))
    assert out.shape == (1, 1, *shape)
    assert out.dtype == np.float32


def test_too_small():
    with pytest.raises(ShapeError):
        denoise_image(build_base(std=0.0), np.zeros((16, 40)))


def test_halo(mixed_net):
    assert block_halo(mixed_net) == 3
    assert block_halo(build_base(std=0.0)) == 0


@pytest.mark.parametrize("tile", [7, 10, 16])
def test_tiles_match_whole_image(rng, mixed_net, tile):
    noisy = rng.uniform(size=(37, 41))
    whole = denoise_image(mixed_net, noisy)
    tiled = denoise_image(mixed_net, noisy, tile=tile)
    np.testing.assert_allclose(tiled, whole, rtol=1e-10, atol=1e-12)


def test_border_modes_differ_only_near_edges(rng):
    net = build_base(rng, 0.1, DType.F64)
    noisy = rng.uniform(size=(40, 40))
    replicate = denoise_image(net, noisy, BorderMode.REPLICATE)
    reflect = denoise_image(net, noisy, BorderMode.REFLECT)

    np.testing.assert_allclose(replicate[..., 8:-8, 8:-8], reflect[..., 8:-8, 8:-8])
    assert not np.allclose(replicate, reflect)


def test_full_frame_constant_image():
    ident = identity_network(build_base(std=0.0))
    out = denoise_image(ident, np.full((480, 640), 0.25, dtype=np.float32), tile=160)
    assert out.shape == (1, 1, 480, 640)
    assert np.all(out == 0.25)
