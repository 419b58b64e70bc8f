import numpy as np
import pytest

from chainwise_sta import (
    DecayVector,
    DeltaTwoMode,
    design_chainwise,
    design_protocol1,
    design_protocol2,
)

# Rb2 three-level decays: 2pi x (0.72 kHz, 12 MHz, 0.4 kHz) in rad/us.
LAMBDA_DECAYS = (2 * np.pi * 7.2e-4, 2 * np.pi * 12.0, 2 * np.pi * 4.0e-4)
# Rb2 five-level decays in rad/us (excited bridges fast, grounds slow).
M_DECAYS = (0.01, 30.0, 0.01, 30.0, 0.0)

# Reference operating points: (t_f us, detuning rad/us).
P1_STAR = (4.0, 1800 * np.pi)
P2_STAR = (4.0, 1200 * np.pi)
CHAIN_STAR = (8.0, 1270 * np.pi, 0.03)


@pytest.fixture(scope="session")
def lambda_decays():
    return DecayVector(LAMBDA_DECAYS)


@pytest.fixture(scope="session")
def m_decays():
    return DecayVector(M_DECAYS)


@pytest.fixture(scope="session")
def p1_schedule():
    return design_protocol1(*P1_STAR)


@pytest.fixture(scope="session")
def p1_schedule_clamped():
    return design_protocol1(*P1_STAR, mode=DeltaTwoMode.exact_clamped())


@pytest.fixture(scope="session")
def p2_schedule():
    return design_protocol2(*P2_STAR)


@pytest.fixture(scope="session")
def chain_schedule():
    return design_chainwise(*CHAIN_STAR)
