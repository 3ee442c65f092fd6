"""Small hand-built fixtures shared by several test modules."""
import numpy as np

from relau.seqmodel import (FACS_LEVELS, AUAnnotation, CameraIntrinsics, Frame, LandmarkFrame, Patch,
                            PatchSpec, PoseVector, SequenceBundle, round_sig)

INTR = CameraIntrinsics(500.0, 100.0, 100.0)


def make_bundle(n_frames=3, n_points=66, seed=0, levels=None, patch=True, truth=False, indices=None):
    rng = np.random.default_rng(seed)
    frames = []
    for k, t in enumerate(indices or range(n_frames)):
        # text files keep 9 significant digits
        pts = round_sig(rng.normal(0, 30, (n_points, 3)) + [0, 0, 600])
        pose = PoseVector.from_array(round_sig(np.r_[rng.normal(0, 5, 3), rng.uniform(-0.3, 0.3, 3)]))
        patches = {"p": Patch(rng.integers(0, 256, (8, 9)).astype(np.uint8), "p")} if patch else {}
        frames.append(Frame(t, LandmarkFrame(pts), pose, patches))
    levels = levels or tuple(FACS_LEVELS[k % 6] for k in range(n_frames))
    tr = {4: round_sig(rng.uniform(0, 1, n_frames))} if truth else None
    spec = (PatchSpec("p", 4, (0, 1, 2, 3), 9, 8),) if patch else ()
    return SequenceBundle("S1", "seq", tuple(frames), (AUAnnotation(4, tuple(levels)),), INTR, spec, tr)


def level_bundle(levels, au_id=4, subject="S1", sequence="seq"):
    """Bundle whose only content that matters is one AU's annotation trace."""
    b = make_bundle(len(levels), 4, 0, tuple(levels), patch=False)
    return SequenceBundle(subject, sequence, b.frames, (AUAnnotation(au_id, tuple(levels)),), INTR)
