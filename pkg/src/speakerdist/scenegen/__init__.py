"""Distance-annotated datasets: synthetic, hybrid (measured RIRs) and real."""
from .audio import (AudioClip, convolve_scene, load_clip, measure_snr, mix_noise, noise_gain,
                    peak_normalize, resample, save_clip)
from .builders import (HybridBuildConfig, RealIngestConfig, SyntheticBuildConfig,
                       build_hybrid_dataset, build_synthetic_dataset, dataset_stats, fold_groups,
                       ingest_real_recordings, ratio_counts, ratio_split, single_source_windows)
from .manifest import DatasetEntry, DatasetManifest, config_hash
from .speech import ClipSource, ambient_noise, speech_like

__all__ = [
    "AudioClip", "ClipSource", "DatasetEntry", "DatasetManifest", "HybridBuildConfig",
    "RealIngestConfig", "SyntheticBuildConfig", "ambient_noise", "build_hybrid_dataset",
    "build_synthetic_dataset", "config_hash", "convolve_scene", "dataset_stats", "fold_groups",
    "ingest_real_recordings", "load_clip", "measure_snr", "mix_noise", "noise_gain",
    "peak_normalize", "ratio_counts", "ratio_split", "resample", "save_clip",
    "single_source_windows", "speech_like",
]
