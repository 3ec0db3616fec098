import pytest

from qkdkit.channel import Detector, FiberLink, LinkModel, OpticalQuality


@pytest.fixture
def fixture_link() -> LinkModel:
    """50 km reference link: V=0.98, mu=0.5, eta_d=0.2, p_d=1e-5, Q_mis=0.005."""
    return LinkModel(
        fiber=FiberLink(attenuation_db_per_km=0.2, length_km=50.0),
        detector=Detector(efficiency=0.2, dark_count_prob=1e-5),
        optics=OpticalQuality(visibility=0.98, misalignment_qber=0.005),
        mean_photon_number=0.5,
    )


@pytest.fixture
def decoy_link() -> LinkModel:
    """Decoy fixture link: same as fixture_link but without misalignment."""
    return LinkModel(
        fiber=FiberLink(attenuation_db_per_km=0.2, length_km=50.0),
        detector=Detector(efficiency=0.2, dark_count_prob=1e-5),
        optics=OpticalQuality(visibility=0.98, misalignment_qber=0.0),
        mean_photon_number=0.5,
    )


@pytest.fixture
def noiseless_link() -> LinkModel:
    return LinkModel(
        fiber=FiberLink(attenuation_db_per_km=0.2, length_km=10.0),
        detector=Detector(efficiency=0.9, dark_count_prob=0.0),
        optics=OpticalQuality(visibility=1.0, misalignment_qber=0.0),
        mean_photon_number=0.5,
    )
