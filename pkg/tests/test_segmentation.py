import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vsr3d import VsrError
from vsr3d.segmentation import (ChannelSet, MouthKeypoints, SymmetryLine, VideoSequence,
                                area_average_resize, build_image_pyramid,
                                build_min_luminance_line, compute_channels,
                                cropped_to_original, detect_inner_lower_lip,
                                detect_mouth_corners, extract_roi, find_symmetry_lines,
                                gaussian_transition_matrix, luminance, prepare_frames,
                                symmetry_cost)


def brute_force_track(priors, trans, obs):
    n_steps, n_states = obs.shape
    best, best_score = None, -1.0
    for path in itertools.product(range(n_states), repeat=n_steps):
        score = priors[path[0]] * obs[0, path[0]]
        for t in range(1, n_steps):
            score *= trans[path[t - 1], path[t]] * obs[t, path[t]]
        if score > best_score:
            best, best_score = path, score
    return list(best)


def channels_from_gray(gray):
    rgb = np.repeat(gray[..., None], 3, axis=2)
    return compute_channels(rgb)


class TestPyramid:
    def test_width_sequence_from_100(self):
        img = np.random.default_rng(0).random((80, 100))
        assert [l.shape[1] for l in build_image_pyramid(img)] == [100, 75, 56, 42, 32, 24]

    def test_width_20_single_level(self):
        img = np.random.default_rng(1).random((30, 20))
        levels = build_image_pyramid(img)
        assert len(levels) == 1 and levels[0].shape[1] == 20

    def test_constant_image_stays_constant(self):
        img = np.full((60, 90), 0.37)
        for level in build_image_pyramid(img):
            assert np.allclose(level, 0.37, atol=1e-12)

    def test_too_narrow_rejected(self):
        with pytest.raises(VsrError):
            build_image_pyramid(np.zeros((30, 19)))

    @given(st.integers(20, 400))
    @settings(max_examples=40, deadline=None)
    def test_widths_strictly_decrease_and_last_in_range(self, w):
        img = np.zeros((24, w))
        widths = [l.shape[1] for l in build_image_pyramid(img)]
        assert all(a > b for a, b in zip(widths, widths[1:]))
        assert 20 <= widths[-1] <= 26

    def test_area_average_preserves_mean(self):
        img = np.random.default_rng(2).random((45, 67))
        out = area_average_resize(img, 21, 33)
        assert abs(out.mean() - img.mean()) < 1e-3  # boundary cells weigh slightly unevenly
        exact = area_average_resize(img, 45, 67)
        assert np.allclose(exact, img)


class TestSymmetryCost:
    def test_perfect_mirror_is_zero(self):
        rng = np.random.default_rng(3)
        img = rng.random((30, 41))
        img = (img + img[:, ::-1]) / 2
        assert symmetry_cost(img, 20, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_true_axis_beats_shifted(self):
        rng = np.random.default_rng(4)
        img = rng.random((30, 41))
        img = (img + img[:, ::-1]) / 2
        assert symmetry_cost(img, 20, 0.0) <= symmetry_cost(img, 23, 0.0)

    def test_2x2_arithmetic(self):
        img = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert symmetry_cost(img, 0.5, 0.0, band=1) == pytest.approx(2.0)

    @given(st.integers(0, 10**6), st.integers(6, 30), st.floats(-30, 30))
    @settings(max_examples=40, deadline=None)
    def test_mirror_invariance(self, seed, col, angle):
        rng = np.random.default_rng(seed)
        img = rng.random((24, 37))
        c1 = symmetry_cost(img, col, angle)
        c2 = symmetry_cost(img[:, ::-1], 36 - col, -angle)
        if math.isinf(c1):
            assert math.isinf(c2)
        else:
            assert c1 == pytest.approx(c2, abs=1e-6)

    def test_degenerate_band_is_infinite(self):
        img = np.random.default_rng(5).random((20, 30))
        assert math.isinf(symmetry_cost(img, 0.0, 0.0))


class TestFindSymmetryLines:
    def test_static_mirrored_video_is_stationary(self):
        # width 21 -> single pyramid level, so the exhaustive search can land
        # exactly on the zero-cost axis, which is then a fixed point
        rng = np.random.default_rng(6)
        frame = rng.integers(0, 255, (24, 21, 3)).astype(np.uint8)
        frame = ((frame.astype(int) + frame[:, ::-1].astype(int)) // 2).astype(np.uint8)
        video = VideoSequence(frames=np.stack([frame] * 4), fps=25.0)
        lines = find_symmetry_lines(video)
        assert len({(l.column, l.angle_deg) for l in lines}) == 1
        assert lines[0].column == 10.0 and lines[0].angle_deg == 0.0

    def test_frame_to_frame_window(self):
        rng = np.random.default_rng(7)
        frames = rng.integers(0, 255, (3, 40, 61, 3)).astype(np.uint8)
        video = VideoSequence(frames=frames, fps=25.0)
        lines = find_symmetry_lines(video)
        for prev, cur in zip(lines, lines[1:]):
            assert abs(cur.column - prev.column) <= 2.0 + 1e-9
            assert abs(cur.angle_deg - prev.angle_deg) <= 1.0 + 1e-9

    def test_recovers_fixture_axis(self, short_sentence):
        video, truth = short_sentence
        lines = find_symmetry_lines(video)
        for t, line in enumerate(lines):
            assert abs(line.column - truth.frames[t].sym_col) <= 2.0
            assert abs(line.angle_deg - truth.frames[t].sym_angle) <= 1.0


class TestPrepareFrames:
    def test_crop_width_fixed(self, short_sentence):
        video, _ = short_sentence
        lines = find_symmetry_lines(video)
        cropped, channels = prepare_frames(video, lines)
        assert cropped.shape == (video.frame_count, video.height, 101, 3)
        assert all(ch.lum.shape == (video.height, 101) for ch in channels)

    def test_neutral_gray_has_zero_u(self):
        rgb = np.full((10, 12, 3), 0.42)
        ch = compute_channels(rgb)
        assert np.abs(ch.u).max() < 1e-9

    def test_pure_red_pseudo_hue(self):
        rgb = np.zeros((4, 4, 3))
        rgb[..., 0] = 1.0
        ch = compute_channels(rgb)
        assert np.allclose(ch.pseudo_hue, 1.0)

    def test_black_pixels_pseudo_hue_half(self):
        ch = compute_channels(np.zeros((3, 3, 3)))
        assert np.allclose(ch.pseudo_hue, 0.5)

    def test_lum_rescaled_to_unit_range(self):
        rng = np.random.default_rng(8)
        ch = compute_channels(rng.random((8, 9, 3)))
        assert ch.lum.min() == pytest.approx(0.0)
        assert ch.lum.max() == pytest.approx(1.0)

    def test_line_count_mismatch_rejected(self, short_sentence):
        video, _ = short_sentence
        with pytest.raises(VsrError):
            prepare_frames(video, [SymmetryLine(10.0, 0.0)])


class TestLipDetection:
    def make_channel(self, ulum):
        z = np.zeros_like(ulum)
        return ChannelSet(lum=z, u=z, ulum=ulum, pseudo_hue=z, red=z, green=z, blue=z)

    def test_single_frame_is_argmax(self):
        rng = np.random.default_rng(9)
        ulum = rng.random((30, 101))
        rows = detect_inner_lower_lip([self.make_channel(ulum)])
        grad = np.gradient(ulum[:, 50])
        assert rows[0] == int(np.argmax(grad))

    def test_noisy_fixed_peak_tracked(self):
        rng = np.random.default_rng(10)
        frames = []
        for _ in range(30):
            col = np.zeros(160)
            col[:120] = 0.0
            col[120:] = 1.0  # step -> gradient peak at row 120
            col += rng.normal(0, 0.05, 160)
            ulum = np.tile(col[:, None], (1, 101))
            frames.append(self.make_channel(ulum))
        rows = detect_inner_lower_lip(frames)
        assert np.abs(rows - 120).max() <= 3

    def test_matches_brute_force_enumeration(self):
        rng = np.random.default_rng(11)
        n_rows, n_frames = 4, 3
        frames = []
        obs = np.empty((n_frames, n_rows))
        for t in range(n_frames):
            col = rng.random(n_rows)
            ulum = np.tile(col[:, None], (1, 101))
            frames.append(self.make_channel(ulum))
            g = np.gradient(ulum[:, 50])
            obs[t] = (g - g.min()) / (g.max() - g.min())
        rows = detect_inner_lower_lip(frames)
        trans = gaussian_transition_matrix(n_rows, 8.0)
        expected = brute_force_track(np.ones(n_rows), trans, obs)
        assert list(rows.astype(int)) == expected

    def test_constant_column_rejected(self):
        ulum = np.zeros((20, 101))
        with pytest.raises(VsrError):
            detect_inner_lower_lip([self.make_channel(ulum)])

    def test_forced_first_row(self):
        rng = np.random.default_rng(12)
        frames = [self.make_channel(rng.random((30, 101))) for _ in range(4)]
        rows = detect_inner_lower_lip(frames, force_first_row=7)
        assert rows[0] == 7


class TestMinLuminanceLine:
    def make_channel(self, lum):
        z = np.zeros_like(lum)
        return ChannelSet(lum=lum, u=z, ulum=z, pseudo_hue=z, red=z, green=z, blue=z)

    def test_dark_strip_followed_exactly(self):
        lum = np.ones((60, 101))
        lum[32:35, :] = 0.0  # thicker than the smoothing kernel, center row darkest
        line = build_min_luminance_line(self.make_channel(lum), 35.0)
        assert line.shape == (81, 2)
        assert (line[:, 0] == 33).all()

    def test_shape_and_column_steps(self):
        rng = np.random.default_rng(13)
        line = build_min_luminance_line(self.make_channel(rng.random((50, 101))), 25.0)
        assert line.shape == (81, 2)
        assert np.array_equal(line[:, 1], np.arange(10, 91))
        assert np.abs(np.diff(line[:, 0])).max() <= 1

    def test_seed_within_search_range(self):
        rng = np.random.default_rng(14)
        for _ in range(5):
            lum = rng.random((64, 101))
            lip = float(rng.uniform(20, 40))
            line = build_min_luminance_line(self.make_channel(lum), lip)
            seed_row = line[40, 0]
            assert lip - 8 - 0.51 <= seed_row <= lip + 4 + 0.51

    def test_rows_clamped_at_boundary(self):
        lum = np.tile(np.linspace(1, 0, 30)[:, None], (1, 101))  # darkest at bottom row
        line = build_min_luminance_line(self.make_channel(lum), 28.0)
        assert line[:, 0].max() <= 29


class TestCornerDetection:
    def make_channel(self, lum):
        z = np.zeros_like(lum)
        return ChannelSet(lum=lum, u=z, ulum=z, pseudo_hue=z, red=z, green=z, blue=z)

    def mouth_like(self, left_col, right_col, h=60, w=101, row=30):
        lum = np.ones((h, w))
        lum[row, left_col:right_col + 1] = 0.0
        return lum

    def test_single_frame_corner_positions(self):
        lum = self.mouth_like(25, 75)
        ch = self.make_channel(lum)
        line = build_min_luminance_line(ch, 30.0)
        left, right = detect_mouth_corners([ch], np.stack([line]))
        assert abs(left[0][1] - 25) <= 2
        assert abs(right[0][1] - 75) <= 2

    def test_left_column_below_right(self, segmented_sentence):
        _, _, result = segmented_sentence
        assert (result.keypoints.left[:, 1] < result.keypoints.right[:, 1]).all()

    def test_matches_brute_force_on_tiny_instance(self):
        rng = np.random.default_rng(15)
        channels, lines = [], []
        for _ in range(3):
            lum = rng.random((50, 101))
            ch = self.make_channel(lum)
            channels.append(ch)
            lines.append(build_min_luminance_line(ch, 25.0))
        lines = np.stack(lines)
        left, right = detect_mouth_corners(channels, lines)
        from vsr3d.segmentation import _box3

        obs_l = np.empty((3, 41))
        obs_r = np.empty((3, 41))
        for t in range(3):
            smooth = _box3(channels[t].lum)
            vals = smooth[lines[t][:, 0], lines[t][:, 1]]
            g = np.gradient(vals)
            gl = -g[:41]
            gr = g[40:]
            obs_l[t] = (gl - gl.min()) / (gl.max() - gl.min())
            obs_r[t] = (gr - gr.min()) / (gr.max() - gr.min())
        trans = gaussian_transition_matrix(41, 2.0)
        pl = brute_force_track(np.ones(41), trans, obs_l)
        pr = brute_force_track(np.ones(41), trans, obs_r)
        for t in range(3):
            assert tuple(left[t]) == tuple(lines[t][pl[t]])
            assert tuple(right[t]) == tuple(lines[t][40 + pr[t]])


class TestExtractRoi:
    def make_channels(self, frames, h=60, w=101, seed=0):
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(frames):
            lum = rng.random((h, w))
            z = np.zeros_like(lum)
            out.append(ChannelSet(lum=lum, u=z + 0.1, ulum=z + 0.2, pseudo_hue=z + 0.3,
                                  red=lum * 0.5, green=z, blue=z))
        return out

    def keypoints(self, rows_left, cols_left, rows_right, cols_right, frames):
        return MouthKeypoints(
            lip_rows=np.zeros(frames),
            left=np.stack([rows_left, cols_left], axis=1).astype(float),
            right=np.stack([rows_right, cols_right], axis=1).astype(float),
            lum_lines=np.zeros((frames, 81, 2), dtype=int),
        )

    def test_horizontal_max_width_frame_is_pure_scale(self):
        from vsr3d.segmentation import bilinear_sample

        chans = self.make_channels(1)
        kp = self.keypoints([30.0], [30.0], [30.0], [70.0], 1)
        roi = extract_roi(chans, kp, 64, 48)
        s = 0.75 * 64 / 40.0
        assert roi.scale == pytest.approx(s)
        assert roi.data.shape == (7, 1, 48, 64)
        gy, gx = np.meshgrid(np.arange(48.0) - 23.5, np.arange(64.0) - 31.5, indexing="ij")
        expected = bilinear_sample(chans[0].lum, 30.0 + gy / s, 50.0 + gx / s)
        assert np.abs(roi.plane("lum")[0] - expected).max() < 1e-12

    def test_corner_rows_align_after_transform(self):
        chans = self.make_channels(3, seed=1)
        kp = self.keypoints([30.0, 28.0, 31.0], [28.0, 30.0, 27.0],
                            [34.0, 36.0, 29.0], [72.0, 69.0, 71.0], 3)
        roi = extract_roi(chans, kp, 64, 48)
        cy, cx = (48 - 1) / 2.0, (64 - 1) / 2.0
        for t in range(3):
            mid = (kp.left[t] + kp.right[t]) / 2.0
            d = kp.right[t] - kp.left[t]
            dist = np.hypot(d[0], d[1])
            ux, uy = d[1] / dist, d[0] / dist
            for p, sign in ((kp.left[t], -1), (kp.right[t], +1)):
                rel = p - mid
                out_x = cx + roi.scale * (rel[1] * ux + rel[0] * uy)
                out_y = cy + roi.scale * (rel[1] * -uy + rel[0] * ux)
                assert abs(out_y - cy) <= 0.5

    def test_deterministic(self):
        chans = self.make_channels(2, seed=2)
        kp = self.keypoints([30.0, 30.0], [30.0, 31.0], [30.0, 29.0], [70.0, 69.0], 2)
        a = extract_roi(chans, kp, 64, 48)
        b = extract_roi(chans, kp, 64, 48)
        assert np.array_equal(a.data, b.data)
        assert a.scale == b.scale

    def test_zero_width_everywhere_rejected(self):
        chans = self.make_channels(1, seed=3)
        kp = self.keypoints([30.0], [50.0], [30.0], [50.0], 1)
        with pytest.raises(VsrError):
            extract_roi(chans, kp, 64, 48)

    def test_scale_constant_across_frames(self, segmented_sentence):
        _, _, result = segmented_sentence
        assert result.roi.scale > 0
        assert result.roi.data.shape == (7, result.keypoints.frame_count, 48, 64)


class TestTrackingHmmOracle:
    """Both tracking HMMs reduce to viterbi_generic; cross-check the whole
    weighting scheme on random instances against enumeration."""

    @given(st.integers(0, 10**6), st.integers(2, 5), st.integers(1, 6))
    @settings(max_examples=30, deadline=None)
    def test_gaussian_hmm_matches_enumeration(self, seed, n_states, n_steps):
        from vsr3d.decoder import viterbi_generic

        rng = np.random.default_rng(seed)
        obs = rng.uniform(0.05, 1.0, (n_steps, n_states))
        for sigma in (2.0, 8.0):
            trans = gaussian_transition_matrix(n_states, sigma)
            priors = np.ones(n_states)
            path, _ = viterbi_generic(priors, trans, obs)
            assert list(path) == brute_force_track(priors, trans, obs)


class TestTranslationInvariance:
    def test_integer_shift_moves_keypoints_and_keeps_roi(self, corpus_config):
        from vsr3d.fixtures import SynthConfig, derive_seed, synth_sentence
        from vsr3d.pipeline import segment_video

        scfg = SynthConfig(seed=11, noise_sigma=0.0)
        dy, dx = 2, 3
        video_a, _ = synth_sentence(scfg, [(0, 5), (1, 5)], 80.0, 0.0,
                                    derive_seed(11, 3, 0), anchor_row=58.0)
        video_b, _ = synth_sentence(scfg, [(0, 5), (1, 5)], 80.0 + dx, 0.0,
                                    derive_seed(11, 3, 0), anchor_row=58.0 + dy)
        ra = segment_video(video_a, corpus_config)
        rb = segment_video(video_b, corpus_config)
        delta = rb.keypoints_original - ra.keypoints_original
        assert np.abs(delta[:, 0] - dy).max() <= 1.0 + 1e-6          # lip row
        assert np.abs(delta[:, [1, 3]] - dy).max() <= 1.0 + 1e-6     # corner rows
        assert np.abs(delta[:, [2, 4]] - dx).max() <= 1.0 + 1e-6     # corner cols
        assert np.abs(ra.roi.data - rb.roi.data).max() <= 2.0 / 255.0


class TestCoordinateMapping:
    def test_cropped_to_original_roundtrip_center(self):
        line = SymmetryLine(column=77.0, angle_deg=2.0)
        r, c = cropped_to_original(line, 120, (120 - 1) / 2.0, 50.0)
        assert r == pytest.approx((120 - 1) / 2.0)
        assert c == pytest.approx(77.0)

    def test_luminance_weights(self):
        rgb = np.zeros((2, 2, 3))
        rgb[..., 0] = 255.0
        assert luminance(rgb)[0, 0] == pytest.approx(0.299)
