from .gbm import GradientBoostedTrees, RegressionTree, fit_tree
from .learners import BaseLearnerSpec, LinearRidge, MlpRegressor, make_learner
from .tlearner import (
    EmptyArmError,
    EstimateReport,
    TLearnerModel,
    config_digest,
    estimate_ace,
    fit_naive_tlearner,
    fit_tlearner,
    predict_ite,
)
from .tsls import TslsResult, fit_ols, fit_tsls
