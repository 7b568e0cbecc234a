import numpy as np
import pytest
from hypothesis import settings

from mcte_lab import ToyGranularParams, ToyGranularSurface

settings.register_profile("lab", deadline=None, max_examples=60)
settings.load_profile("lab")

# grid the coupled-surface properties are checked over
C_GRID = (0.0, 0.15, 0.3, 0.6)
V0_GRID = (0.79, 0.80, 0.85, 0.90)


@pytest.fixture
def toy_decoupled():
    return ToyGranularSurface(ToyGranularParams())


@pytest.fixture
def toy_c03():
    return ToyGranularSurface(ToyGranularParams(c=0.3))


@pytest.fixture
def toy_c06():
    return ToyGranularSurface(ToyGranularParams(c=0.6))


def write_table(path, surface, v_lo, v_hi, s_lo, s_hi, n_v=36, n_s=31):
    """Dump a surface onto a uniform grid in the tabulated CSV format."""
    from mcte_lab import eval_S
    vs = np.linspace(v_lo, v_hi, n_v)
    ss = np.linspace(s_lo, s_hi, n_s)
    with open(path, "w") as fh:
        fh.write("q0,q1,S\n")
        for v in vs:
            for s in ss:
                val = eval_S(surface, np.array([v, s]))
                fh.write(f"{float(v)!r},{float(s)!r},{float(val)!r}\n")
    return path
