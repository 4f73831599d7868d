"""Evaluation workbench for neural audio synthesis.

Objective metrics (reconstruction, diversity, distribution distance), a
MUSHRA-style listening-study service, and statistical analysis relating
subjective ratings to the metrics.
"""

from .audio import (AudioClip, Spectrogram, StftParams, make_anchor,
                    read_wav, stft, wav_bytes, write_wav)
from .analysis import (RatingRow, RatingsTable, StatTestResult,
                       build_analysis_report, correlate, krippendorff_alpha,
                       mushra_band, ranking_permutations, screen_raters,
                       summarize, wilcoxon_signed_rank)
from .dataio import (StudyManifest, load_manifest, read_csv_matrix,
                     read_embedding_file, write_embedding_file)
from .errors import AevalError, DataError
from .metrics import (EmbeddingSet, GaussianStats, NdbModel,
                      ProbabilityMatrix, fad, fit_gaussian, fit_ndb,
                      frechet_distance, inception_score, kid, mse_mae,
                      multi_scale_distance, ndb_score)

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "Spectrogram", "StftParams", "make_anchor", "read_wav",
    "stft", "wav_bytes", "write_wav",
    "RatingRow", "RatingsTable", "StatTestResult", "build_analysis_report",
    "correlate", "krippendorff_alpha", "mushra_band", "ranking_permutations",
    "screen_raters", "summarize", "wilcoxon_signed_rank",
    "StudyManifest", "load_manifest", "read_csv_matrix",
    "read_embedding_file", "write_embedding_file",
    "AevalError", "DataError",
    "EmbeddingSet", "GaussianStats", "NdbModel", "ProbabilityMatrix", "fad",
    "fit_gaussian", "fit_ndb", "frechet_distance", "inception_score", "kid",
    "mse_mae", "multi_scale_distance", "ndb_score",
    "__version__",
]
