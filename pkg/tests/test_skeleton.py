import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snipmotion.skeleton import MotionSequence, Skeleton, slice as take, velocity


def random_seq(rng, frames=10, joints=4, dims=3):
    return MotionSequence(rng.normal(size=(frames, joints, dims)))


class TestSkeleton:
    def test_chain(self):
        sk = Skeleton.chain(4)
        assert sk.bones == ((0, 1), (1, 2), (2, 3))
        assert sk.diameter() == 3

    def test_pairs_are_normalized(self):
        assert Skeleton(3, [(1, 0), (2, 1)]).bones == ((0, 1), (1, 2))

    @pytest.mark.parametrize("bones, msg", [
        ([(0, 0)], "self-loop"),
        ([(0, 1), (1, 0)], "duplicate"),
        ([(0, 3)], "out of range"),
        ([(0, 1)], "not connected"),
    ])
    def test_invalid(self, bones, msg):
        with pytest.raises(ValueError, match=msg):
            Skeleton(3, bones)

    def test_single_joint(self):
        assert Skeleton(1, []).adjacency().shape == (1, 1)


class TestMotionSequence:
    def test_rejects_nan(self):
        with pytest.raises(ValueError, match="non-finite"):
            MotionSequence(np.full((2, 1, 3), np.nan))

    def test_rejects_bad_rank(self):
        with pytest.raises(ValueError):
            MotionSequence(np.zeros((2, 3)))

    def test_is_immutable(self):
        src = np.zeros((2, 1, 3))
        seq = MotionSequence(src)
        src[0, 0, 0] = 5.0
        assert seq.data[0, 0, 0] == 0.0
        with pytest.raises(ValueError):
            seq.data[0, 0, 0] = 1.0


class TestSlice:
    def test_identity(self):
        seq = random_seq(np.random.default_rng(0))
        assert take(seq, 0, 9) == seq

    def test_single_frame(self):
        seq = random_seq(np.random.default_rng(1))
        one = take(seq, 3, 3)
        assert one.frames == 1
        np.testing.assert_array_equal(one.data[0], seq.data[3])

    @pytest.mark.parametrize("start, end, bound", [(5, 4, "start 5 > end 4"), (-1, 2, "start -1"),
                                                   (0, 10, "end 10")])
    def test_bad_range(self, start, end, bound):
        with pytest.raises(IndexError, match=bound):
            take(random_seq(np.random.default_rng(2)), start, end)

    @given(st.integers(0, 9), st.integers(0, 9))
    def test_nested_slice(self, a, b):
        a, b = min(a, b), max(a, b)
        seq = random_seq(np.random.default_rng(3))
        inner = take(seq, a, b)
        assert take(inner, 0, b - a) == inner


class TestVelocity:
    def test_constant_is_zero(self):
        seq = MotionSequence(np.ones((5, 2, 3)))
        assert np.all(velocity(seq).data == 0)

    def test_ramp(self):
        c = np.array([[1.0, -2.0, 0.5]])
        seq = MotionSequence(np.arange(6)[:, None, None] * c)
        np.testing.assert_allclose(velocity(seq).data, np.broadcast_to(c, (5, 1, 3)))

    def test_three_frames_elementwise(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(3, 2, 3))
        v = velocity(MotionSequence(x)).data
        for t in range(2):
            for j in range(2):
                for k in range(3):
                    assert v[t, j, k] == x[t + 1, j, k] - x[t, j, k]

    def test_needs_two_frames(self):
        with pytest.raises(ValueError):
            velocity(MotionSequence(np.zeros((1, 1, 3))))

    @settings(max_examples=50)
    @given(st.integers(0, 10_000))
    def test_cumsum_reconstructs(self, seed):
        x = np.random.default_rng(seed).normal(size=(7, 3, 3))
        v = velocity(MotionSequence(x)).data
        rebuilt = np.concatenate([x[:1], x[:1] + np.cumsum(v, axis=0)])
        np.testing.assert_allclose(rebuilt, x, rtol=0, atol=1e-9)
