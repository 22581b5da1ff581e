import pytest

from vsr3d.config import PipelineConfig
from vsr3d.fixtures import Rng, SynthConfig, derive_seed, random_units, synth_sentence


@pytest.fixture(scope="session")
def synth_cfg():
    return SynthConfig(seed=42, noise_sigma=4.0 / 255.0)


def make_sentence(synth_cfg, index, seed=42):
    """One deterministic rendered sentence with ground truth."""
    rng = Rng(derive_seed(seed, 0, index))
    units = random_units(synth_cfg, rng)
    col = (synth_cfg.frame_width - 1) / 2.0 + rng.randint(-8, 8)
    ang = float(rng.randint(-3, 3))
    return synth_sentence(synth_cfg, units, col, ang, derive_seed(seed, 3, index))


@pytest.fixture(scope="session")
def short_sentence(synth_cfg):
    video, truth = make_sentence(synth_cfg, 0)
    return video, truth


@pytest.fixture(scope="session")
def corpus_config():
    """Pipeline configuration matched to the synthetic corpus (unit durations
    3..12 frames, no audio-visual lag)."""
    return PipelineConfig(
        delta_t_ms=0.0,
        min_duration=3,
        max_duration=12,
        biphone_min_duration=6,
        biphone_max_duration=24,
        c_grid=(64.0,),
        gamma_grid=(2.0**-3,),
    )


@pytest.fixture(scope="session")
def segmented_sentence(short_sentence, corpus_config):
    from vsr3d.pipeline import segment_video

    video, truth = short_sentence
    return video, truth, segment_video(video, corpus_config)

