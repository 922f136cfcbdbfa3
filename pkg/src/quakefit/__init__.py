"""quakefit: point-process models for seismicity analysis and forecasting.

Fitting, simulation, diagnostics and forecasting for magnitude-frequency
laws, Omori-Utsu / Reasenberg-Jones aftershock models, temporal and
space-time ETAS, BPT renewal forecasting with empirical-Bayes hierarchy,
multi-precursor probability combination, covariate causality models and
foreshock discrimination.
"""

from ._backend import backend_name
from .catalog import (Catalog, ClusterRecord, ClusterType, Event,
                      classify_cluster, load_catalog, select_window,
                      single_link_cluster)
from .errors import (CatalogError, ExplosionError, IntegrationError,
                     InvalidStartError, QuakefitError)
from .numerics import FitResult, OptimResult, integrate, integrate2d, \
    minimize, std_normal_cdf
from .magnitude import (DetectionParams, EarlyDetectionModel, GrParams,
                        detection_prob, early_aftershock_intensity,
                        fit_detected_magnitudes, fit_gr)
from .aftershock import (AftershockForecast, OmoriParams, RjParams,
                         fit_omori, forecast_probability, omori_integral,
                         omori_rate, rj_intensity, simulate_omori)
from .etas import (AnomalyReport, EtasParams, ResidualSeries,
                   branching_ratio, detect_anomaly, etas_intensity,
                   etas_loglik, fit_etas, simulate_etas, transform_times)
from .etas_st import (BackgroundField, ClusterShape, StEtasParams,
                      background_weights, estimate_cluster_shape,
                      fit_st_etas, simulate_st_etas, st_intensity,
                      st_loglik, update_background)
from .renewal import (BptParams, HyperParams, SegmentData, bayes_predict,
                      bpt_functions, fit_bpt, fit_hier_bayes,
                      forecast_interval_prob, renewal_loglik, simulate_bpt)
from .precursor import (CausalityTest, CovariateModel, CovariateSeries,
                        ExpKernel, PrecursorSet, combine_approx,
                        combine_exact, combine_stations, covariate_intensity,
                        fit_covariate, fit_periodic)
from .foreshock import (ForeshockModel, LocationPrior, PairStatistics,
                        fit_foreshock_model, foreshock_probability,
                        standardize_pair)

__version__ = "0.1.0"
