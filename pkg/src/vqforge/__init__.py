"""Dataset-construction and subjective-study analysis toolkit for video quality studies."""

__version__ = "0.1.0"

from .analysis import (
    compute_mos, export_histogram, inter_subject_consistency, intra_subject_golden,
    patch_video_correlation,
)
from .cleaning import (
    BT500Screener, CleaningConfig, CleaningReport, RatingTable, ScoreOutlierFilter,
    bt500_screen, clean, outlier_filter,
)
from .features import FEATURE_NAMES, FaceSidecar, FeatureExtractor, extract_features
from .media_io import FrameSequence, VideoMeta, load_frames, to_gray
from .patchgen import PatchBox, PatchTriplet, gen_patch_triplet, overlap_fraction
from .sampler import HistogramMatchingSampler, SelectionProblem, build_bins, evaluate_objective, solve
from .screening import ScreeningConfig, SessionScreener, SessionVerdict, apply_event, finalize_session
from .simulate import PopulationSpec, SubjectModel, WorldModel, simulate_study
from .stats import kurtosis, lcc, srcc
