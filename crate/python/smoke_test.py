"""Smoke test for the audkit extension module.

Build and run from the repository root:

    cargo build --release -p audkit-python
    cp target/release/libaudkit_py.so python/audkit.so
    python3 python/smoke_test.py
"""

import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import audkit  # noqa: E402


def main():
    arc, gold = audkit.generate_corpus(n_phones=8, dim=6, n_utts=20, seed=1)
    print(arc)

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "feats.audf")
        arc.save(path)
        assert audkit.FeatureArchive.load(path) == arc
        ali = os.path.join(d, "gold.ali")
        audkit.write_alignment(ali, gold)
        assert audkit.read_alignment(ali) == gold

    labels = [lab for s, e, lab in gold["utt00000"] for _ in range(e - s)]
    bounds = audkit.boundaries_from_labels(labels)
    print("boundaries of utt00000:", bounds)

    noisy = audkit.corrupt(gold, jitter_frames=2, substitution_rate=0.1, seed=3)
    hyp = [s for s, _, _ in noisy["utt00000"]][1:]
    p, r, f = audkit.boundary_prf(hyp, bounds, len(labels), tolerance_frames=2)
    print(f"corrupted boundaries: P={p:.2f} R={r:.2f} F={f:.2f}")

    frames = arc.frames("utt00000")
    print("DS-3 embedding size:", len(audkit.embed_segment(frames[:5], "ds", 3)))

    model = audkit.kmeans_fit(frames, k=4, seed=0)
    print(model)

    print("NMI([[3,1],[0,4]]) =", round(audkit.nmi([[3, 1], [0, 4]]), 4))

    report = audkit.run_experiment(
        '[synth]\nn_phones = 8\ndim = 6\nn_utts = 20\n[cluster]\nk = 8\n[run]\nreps = 3\n'
    )
    mean = report["mean"]
    print(f"segment run: NMI {mean['nmi_pct']:.2f}  F {mean['fscore_pct']:.2f}")
    assert len(report["per_rep"]) == 3

    try:
        audkit.kmeans_fit([[0.0]], k=2)
    except audkit.AudkitError as e:
        print("expected error:", e)
    print("ok")


if __name__ == "__main__":
    main()
