"""Playback defects: a frozen frame ("stuck") or an excised span ("drop")."""

from __future__ import annotations

ONSET_S = 2.0


def temporal_discontinuity(seq, mode, seconds, onset_s=ONSET_S):
    """Inject a stuck or drop event of ``seconds`` starting at ``onset_s``.

    stuck: the onset frame is shown for ``seconds``, playback then resumes
        with the next frame; the tail is cut so the frame count is unchanged.
    drop: frames in ``[onset, onset + seconds)`` are removed.
    """
    n = len(seq.frames)
    onset = int(round(onset_s * seq.fps))
    span = int(round(seconds * seq.fps))
    if span <= 0:
        raise ValueError("event duration must be positive")
    if span >= n - onset:
        raise ValueError(f"{seconds}s event does not fit after the {onset_s}s onset")
    frames = [f.copy() for f in seq.frames]
    if mode == "stuck":
        out = frames[:onset] + [frames[onset].copy() for _ in range(span)] + frames[onset + 1 :]
        out = out[:n]
    elif mode == "drop":
        out = frames[:onset] + frames[onset + span :]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return seq.replace(frames=out)
