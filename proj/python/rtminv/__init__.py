"""Learning simulator input priors from outputs, and inverting the simulator."""

try:
    from . import _rtminv as _ext
except ImportError:  # in-tree build: the extension is on sys.path on its own
    import _rtminv as _ext

FitResult = _ext.FitResult
ForwardModel = _ext.ForwardModel
Gaussian = _ext.Gaussian
InvalidState = _ext.InvalidState
NumericalFailure = _ext.NumericalFailure
UnsupportedOperation = _ext.UnsupportedOperation
fit_mcem = _ext.fit_mcem
fit_vi = _ext.fit_vi
gen_data = _ext.gen_data
kl_gaussians = _ext.kl_gaussians
make_model = _ext.make_model
model_names = _ext.model_names
ris_log_evidence = _ext.ris_log_evidence
sample_posterior = _ext.sample_posterior
test_evidence = _ext.test_evidence

__all__ = [
    "FitResult",
    "ForwardModel",
    "Gaussian",
    "InvalidState",
    "NumericalFailure",
    "UnsupportedOperation",
    "fit_mcem",
    "fit_vi",
    "gen_data",
    "kl_gaussians",
    "make_model",
    "model_names",
    "ris_log_evidence",
    "sample_posterior",
    "test_evidence",
]
