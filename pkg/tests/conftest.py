"""Shared fixtures for the test suite."""

import pytest

from ttfedsim.wireless import ChannelParams


@pytest.fixture
def radio() -> ChannelParams:
    """Baseline radio constants used throughout: 3.76 path-loss exponent,
    -174 dBm/Hz noise floor, 10 mW transmit power, 0 dB decoding threshold,
    20 MHz uplink budget, and a 636160-bit model payload."""
    return ChannelParams(
        path_loss_exponent=3.76,
        noise_psd=3.98e-21,
        tx_power=0.01,
        snr_threshold=1.0,
        total_bandwidth=20e6,
        model_bits=636160.0,
    )
