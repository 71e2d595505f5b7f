import pytest

from adapters.pandas_adapter import PandasAdapter
from adapters.plotly_adapter import PlotlyAdapter
from adapters.sympy_adapter import SymPyAdapter
from domain.losses import make_loss, parse_loss
from domain.models import LossKind
from use_cases.experiment_service import ExperimentService
from use_cases.mean_model_service import MeanModelService
from use_cases.relu_net_service import ReluNetService
from use_cases.single_neuron_service import SingleNeuronService

STANDARD_LOSSES = ["rsym-logistic", "sqrt", "huber", "sym-logistic", "higher-order:3/2", "higher-order:4"]


@pytest.fixture
def sympy_adapter():
    return SymPyAdapter()


@pytest.fixture
def single_neuron(sympy_adapter):
    return SingleNeuronService(sympy_adapter)


@pytest.fixture
def mean_model():
    return MeanModelService()


@pytest.fixture
def relu():
    return ReluNetService()


@pytest.fixture
def experiments():
    return ExperimentService(PandasAdapter())


@pytest.fixture
def plotly_adapter():
    return PlotlyAdapter()


@pytest.fixture
def sqrt_loss():
    return make_loss(LossKind.SQRT)


@pytest.fixture
def sym_logistic():
    return make_loss(LossKind.SYM_LOGISTIC)


@pytest.fixture(params=STANDARD_LOSSES)
def any_loss(request):
    return parse_loss(request.param)


@pytest.fixture
def small_dataset(relu):
    return relu.generate_dataset(d=20, n=40, lam=3.0, seed=7)
