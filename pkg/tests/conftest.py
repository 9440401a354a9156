import pytest

from p3fres import datasets
from p3fres.stack_model import MaterialProps, bundled_config, load_stack


@pytest.fixture(scope="session")
def ln():
    """Bundled effective LiNbO3 constants (lossy)."""
    return load_stack(bundled_config("single_layer")).layers[0].material


@pytest.fixture(scope="session")
def ln_lossless(ln):
    return MaterialProps(ln.density, ln.c_stiff, ln.e_piezo, ln.eps_clamped, name="ln_lossless")


@pytest.fixture(scope="session")
def bilayer():
    return load_stack(bundled_config("bilayer_p3f"))


@pytest.fixture(scope="session")
def paper_params():
    return datasets.paper_params()


@pytest.fixture(scope="session")
def two_tone_params():
    return datasets.calibrate(datasets.PAPER_TONES, datasets.PAPER_C0, datasets.PAPER_RS, datasets.PAPER_R0)
