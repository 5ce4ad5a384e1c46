"""Modulation-division multiuser downlink: constellation groups, sum-signal
detection, max-min beamforming, user grouping and a BER simulator."""

__version__ = "0.1.0"

from .beamforming import baseline_precoders, md_two_user, snr_gain_kappa, snr_gain_rho
from .constellation import (
    PamUdcg,
    QamUdcg,
    average_sum_power,
    build_pam_udcg,
    build_qam_udcg,
    sum_points,
    verify_unique_decomposability,
)
from .detection import detect_qam, ml_detect_oracle
from .grouping import (
    GroupingPlan,
    count_pair_groupings,
    exhaustive_grouping,
    greedy_grouping,
    group_beamformers,
    group_weights,
    grouping_gain,
)
from .simulator import SimConfig, run_sweep

__all__ = [
    "PamUdcg",
    "QamUdcg",
    "build_pam_udcg",
    "build_qam_udcg",
    "sum_points",
    "average_sum_power",
    "verify_unique_decomposability",
    "detect_qam",
    "ml_detect_oracle",
    "md_two_user",
    "snr_gain_rho",
    "snr_gain_kappa",
    "baseline_precoders",
    "GroupingPlan",
    "grouping_gain",
    "greedy_grouping",
    "exhaustive_grouping",
    "count_pair_groupings",
    "group_weights",
    "group_beamformers",
    "SimConfig",
    "run_sweep",
]
