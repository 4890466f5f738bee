"""Shoebox room simulation and acoustic descriptors."""
from .acoustics import compute_drr, detect_direct_delay, estimate_rt60, eyring_rt60, fit_rt60, mid_rt60
from .images import enumerate_images
from .io import load_rir, save_rir
from .materials import by_surface_class, load_material_table
from .sampling import RoomSampling, sample_scene
from .scene import (BANDS_HZ, SAMPLE_RATE, SPEED_OF_SOUND, SURFACES, Material, Rir, RoomSpec,
                    SceneError, SceneSpec)
from .synth import synthesize_rir

__all__ = [
    "BANDS_HZ", "SAMPLE_RATE", "SPEED_OF_SOUND", "SURFACES", "Material", "Rir", "RoomSpec",
    "SceneError", "SceneSpec", "RoomSampling", "by_surface_class", "compute_drr",
    "detect_direct_delay", "enumerate_images", "estimate_rt60", "eyring_rt60", "fit_rt60",
    "load_material_table", "load_rir", "mid_rt60", "sample_scene", "save_rir", "synthesize_rir",
]
