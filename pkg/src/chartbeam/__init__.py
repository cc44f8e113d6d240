"""chartbeam: channel-charting-based beam and precoder prediction.

Pipeline: synthesize multi-BS MIMO channels, build a 2D-DFT beam codebook,
chart the uplink channels at BS1 with ISOMAP, then predict beams or
precoders at every BS from the low-dimensional pseudo-locations using RFF or
MLP networks and 1-NN baselines.
"""

__version__ = "0.1.0"

from .channel import (
    ArrayConfig,
    CarrierConfig,
    ChannelSample,
    Dataset,
    Rectangle,
    SceneConfig,
    build_dataset,
    load_dataset,
    save_dataset,
    steering_vector,
    synthesize_channel,
)
from .chart import (
    ChannelCharter,
    ChartQuality,
    build_chart,
    channel_distance,
    chart_quality,
    classical_mds,
    embed,
    load_chart,
    save_chart,
)
from .codebook import (
    BeamRanking,
    Codebook,
    best_beam,
    build_codebook,
    dft_1d,
    precoder_correlation,
    rank_beams,
)
from .evaluate import (
    EvalReport,
    correlation_cdf,
    correlation_map,
    overhead_report,
    time_inference,
    top_k_accuracy,
)
from .neural import (
    Network,
    TrainConfig,
    TrainingDivergedError,
    backward,
    correlation_loss,
    cross_entropy,
    forward,
    init_network,
    load_network,
    rff_forward,
    save_network,
    train,
)
from .predictors import (
    BeamClassifier,
    CodebookClassifierPrecoder,
    NearestBeamPredictor,
    NearestPrecoderPredictor,
    PrecoderRegressor,
    nn1_build,
    predict_beam,
    predict_precoder,
)

__all__ = [
    "ArrayConfig", "CarrierConfig", "ChannelSample", "Dataset", "Rectangle", "SceneConfig",
    "build_dataset", "load_dataset", "save_dataset", "steering_vector", "synthesize_channel",
    "ChannelCharter", "ChartQuality", "build_chart", "channel_distance", "chart_quality",
    "classical_mds", "embed", "load_chart", "save_chart",
    "BeamRanking", "Codebook", "best_beam", "build_codebook", "dft_1d",
    "precoder_correlation", "rank_beams",
    "EvalReport", "correlation_cdf", "correlation_map", "overhead_report",
    "time_inference", "top_k_accuracy",
    "Network", "TrainConfig", "TrainingDivergedError", "backward", "correlation_loss",
    "cross_entropy", "forward", "init_network", "load_network", "rff_forward",
    "save_network", "train",
    "BeamClassifier", "CodebookClassifierPrecoder", "NearestBeamPredictor",
    "NearestPrecoderPredictor", "PrecoderRegressor", "nn1_build",
    "predict_beam", "predict_precoder",
]
