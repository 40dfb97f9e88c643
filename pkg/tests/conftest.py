import math

import numpy as np
import pytest
from hypothesis import settings

from hybrid6dma.channel import CarrierConfig, SystemModel
from hybrid6dma.geometry import AntennaPattern, ArrayLayout
from hybrid6dma.scenario import place_candidate_poses

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def carrier():
    return CarrierConfig()


@pytest.fixture(scope="session")
def model(carrier):
    return SystemModel(ArrayLayout.square(16, carrier.wavelength / 2), carrier, AntennaPattern())


@pytest.fixture(scope="session")
def poses32():
    return place_candidate_poses(32, 0.5)


# ---------------------------------------------------------------------------
# Independent oracles: scalar loops straight from the model definitions,
# sharing no code with the package beyond the rotation matrix.
# ---------------------------------------------------------------------------

def oracle_pattern_gain(local, gmax=8.0, hpbw=math.radians(65.0), am=30.0, sla=30.0):
    lx, ly, lz = local
    if lx <= 0.0:
        return 0.0
    el = math.atan2(lz, math.hypot(lx, ly))
    az = math.atan2(ly, lx)
    att = min(min(12 * (el / hpbw) ** 2, sla) + min(12 * (az / hpbw) ** 2, am), am)
    return 10 ** ((gmax - att) / 10)


def oracle_hybrid(poses, layout, user_pos, nu, k):
    out = []
    for pose in poses:
        R = pose.matrix
        delta = [user_pos[i] - pose.position[i] for i in range(3)]
        d_b = math.sqrt(sum(x * x for x in delta))
        f = [x / d_b for x in delta]
        local = [sum(R[i][j] * f[i] for i in range(3)) for j in range(3)]
        g = oracle_pattern_gain(local)
        for r in layout.positions:
            off = [sum(R[i][j] * r[j] for j in range(3)) for i in range(3)]
            ph = -k * d_b + k * sum(f[i] * off[i] for i in range(3))
            out.append(nu * math.sqrt(g) * complex(math.cos(ph), math.sin(ph)))
    return np.array(out)


def oracle_near(poses, layout, user_pos, nu, k, d_ref=None):
    out = []
    for pose in poses:
        R = pose.matrix
        for r in layout.positions:
            ant = [pose.position[i] + sum(R[i][j] * r[j] for j in range(3)) for i in range(3)]
            delta = [user_pos[i] - ant[i] for i in range(3)]
            d = math.sqrt(sum(x * x for x in delta))
            local = [sum(R[i][j] * delta[i] / d for i in range(3)) for j in range(3)]
            amp = nu * (d_ref / d if d_ref else 1.0)
            out.append(amp * math.sqrt(oracle_pattern_gain(local)) * complex(math.cos(-k * d), math.sin(-k * d)))
    return np.array(out)


def acceptance_report(capsys, number: int, title: str, ok: bool, detail: str):
    """Print one PASS/FAIL line per acceptance criterion, visible under -v."""
    with capsys.disabled():
        print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
    assert ok, f"criterion {number} ({title}) failed: {detail}"
