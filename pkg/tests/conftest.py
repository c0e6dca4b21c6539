import numpy as np
import pytest

from mscale_stokes.net import FieldSet, MLPArch, MscaleNet

AUX = {"wVP": 1, "wVP_noPoisson": 1, "VSP": 3, "VgVP": 4}


def random_fieldset(variant, rng, layers=2, width=8, scales=(1.0, 2.0)):
    def make(out):
        return MscaleNet.create(MLPArch(out, layers, width), scales, rng)

    fields = FieldSet(make(2), make(1))
    if variant != "VP":
        fields.aux = make(AUX[variant])
        if variant != "wVP_noPoisson":
            fields.q = make(2)
    return fields


def central_fd_gradient(fn, flat, h=1e-6):
    """Central differences of ``fn()`` with respect to every entry of ``flat`` (in place)."""
    out = np.empty(flat.size)
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + h
        up = fn()
        flat[k] = old - h
        down = fn()
        flat[k] = old
        out[k] = (up - down) / (2 * h)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
