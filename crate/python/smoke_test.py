#!/usr/bin/env python3
"""Smoke test for the voicesep_py extension module.

Builds the cdylib with cargo (if needed), loads it, and exercises the main
operations end to end: corpus generation, WAV + mel round trips, content
pooling, GE2E loss, EER, split/vote arithmetic, metric reconstruction, and
2-D projection. Exits non-zero on the first failure.

Usage: python3 python/smoke_test.py
"""

import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def build_and_import():
    lib = REPO / "target" / "debug" / "libvoicesep_py.so"
    if not lib.exists():
        subprocess.run(
            ["cargo", "build", "-p", "voicesep-py"], cwd=REPO, check=True
        )
    staging = REPO / "target" / "py"
    staging.mkdir(parents=True, exist_ok=True)
    target = staging / "voicesep_py.so"
    if not target.exists() or lib.stat().st_mtime > target.stat().st_mtime:
        shutil.copy2(lib, target)
    sys.path.insert(0, str(staging))
    import voicesep_py

    return voicesep_py


def approx(a, b, tol=1e-4):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    vs = build_and_import()

    # Metric reconstruction of the published confusion rows.
    m = vs.metrics(47, 25, 24, 15)
    approx(m["accuracy"], 0.6396)
    approx(m["f1"], 0.7015)
    approx(m["specificity"], 0.4898)
    approx(m["recall"], 0.7581)
    m = vs.metrics(43, 22, 27, 19)
    approx(m["accuracy"], 0.6306)
    approx(m["f1"], 0.6772)
    approx(m["specificity"], 0.5510)
    approx(m["recall"], 0.6935)
    print("ok metrics")

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)

        # Synthetic corpus: 4 speakers x 2 utterances, two balanced classes.
        summary = vs.gen_corpus(
            str(tmp / "audio"), str(tmp / "manifest.csv"), 4, 2, seed=11
        )
        assert summary["records"] == 8, summary
        assert summary["speakers"] == 4, summary
        assert summary["cn"] == 4 and summary["im"] == 4, summary
        print("ok gen_corpus")

        # Augmentation keeps counts, re-keys sessions.
        records, cn, im = vs.augment_manifest(
            str(tmp / "manifest.csv"), str(tmp / "manifest_aug.csv")
        )
        assert (records, cn, im) == (8, 4, 4)
        print("ok augment_manifest")

        # WAV round trip and both mel presets.
        wavs = sorted((tmp / "audio").glob("*.wav"))
        samples, rate = vs.read_wav(str(wavs[0]))
        assert rate == 16000 and len(samples) > rate, len(samples)
        vs.write_wav(str(tmp / "copy.wav"), samples, rate)
        copied, _ = vs.read_wav(str(tmp / "copy.wav"))
        assert len(copied) == len(samples)

        content = vs.mel_spectrogram(samples, rate, "content")
        speaker = vs.mel_spectrogram(samples, rate, "speaker")
        assert len(content) == 80 and len(speaker) == 40
        assert len(content[0]) > 0 and len(speaker[0]) > 0
        print(f"ok mel (content {len(content[0])} frames, speaker {len(speaker[0])} frames)")

        # The slower impaired class is visible to the rate detector.
        cn_wav = next(w for w in wavs if w.name.startswith("spk000"))
        im_wav = next(w for w in wavs if w.name.startswith("spk001"))
        cn_rate = vs.speech_rate(vs.read_wav(str(cn_wav))[0], 16000)
        im_rate = vs.speech_rate(vs.read_wav(str(im_wav))[0], 16000)
        assert cn_rate > im_rate, (cn_rate, im_rate)
        print(f"ok speech_rate (CN {cn_rate:.2f}/s > IM {im_rate:.2f}/s)")

        # One miniature end-to-end condition through the orchestrator.
        vs.gen_corpus(str(tmp / "audio6"), str(tmp / "manifest6.csv"), 6, 3, seed=2)
        config = tmp / "condition.conf"
        config.write_text(
            "embedding=content\n"
            "conditioning=one-hot\n"
            "session-policy=none\n"
            "classifiers=lda\n"
            "seed=5\n"
            "folds=3\n"
            "trials=1\n"
            "eval-fraction=0.34\n"
            "speaker-steps=2\n"
            "separator-steps=2\n"
            f"manifest={tmp / 'manifest6.csv'}\n"
            f"workdir={tmp / 'run'}\n"
        )
        report = vs.run_experiment(str(config))
        assert report["conditioning_dim"] == 18, report
        assert len(report["eval_labels"]) == 6
        assert "lda" in report["classifiers"]
        assert len(report["classifiers"]["lda"]["folds"]) == 3
        reloaded = vs.load_report(str(tmp / "run" / "report.txt"))
        assert reloaded["classifiers"]["lda"]["ensembled"] == (
            report["classifiers"]["lda"]["ensembled"]
        )
        print("ok run_experiment / load_report")

    # Pooling: 64 x 16 content embedding -> width-512 vector; constant rows
    # pool to their own value.
    code = [[float(r) for _ in range(16)] for r in range(64)]
    pooled = vs.pool_content(code)
    assert len(pooled) == 512
    approx(pooled[0], 0.0)
    approx(pooled[8], 1.0)
    print("ok pool_content")

    # GE2E: two well-separated speakers give a small loss, collapsed
    # embeddings a large one.
    tight = [[[1.0, 0.0]] * 3, [[0.0, 1.0]] * 3]
    collapsed = [[[1.0, 0.0]] * 3, [[1.0, 0.0]] * 3]
    assert vs.ge2e(tight) < vs.ge2e(collapsed), (vs.ge2e(tight), vs.ge2e(collapsed))
    print("ok ge2e")

    # EER: perfectly ordered scores -> 0; reversed -> 1.
    approx(vs.eer([0.9, 0.8, 0.2, 0.1], [True, True, False, False]), 0.0, 1e-6)
    approx(vs.eer([0.1, 0.2, 0.8, 0.9], [True, True, False, False]), 1.0, 1e-6)
    print("ok eer")

    # Split arithmetic on the published manifest sizes.
    labels = [0] * 242 + [1] * 310
    train, evl = vs.stratified_split(labels, 111 / 552, seed=0)
    assert len(train) == 441 and len(evl) == 111, (len(train), len(evl))
    assert sum(labels[i] for i in evl) == 62  # 49 CN / 62 IM
    folds = vs.stratified_kfold(labels, 5, seed=0)
    assert sorted(set(folds)) == [0, 1, 2, 3, 4]
    print("ok stratified_split / stratified_kfold")

    voted = vs.majority_vote([[0, 1, 1], [0, 0, 1], [1, 1, 1]])
    assert voted == [0, 1, 1], voted
    print("ok majority_vote")

    # Projection keeps two well-separated clusters apart.
    import random

    rng = random.Random(1)
    embs = []
    for center in (-6.0, 6.0):
        for _ in range(20):
            embs.append([center + rng.uniform(-0.5, 0.5) for _ in range(32)])
    coords = vs.project_2d(embs, seed=3)
    assert len(coords) == 40
    mean_a = sum(x for x, _ in coords[:20]) / 20
    mean_b = sum(x for x, _ in coords[20:]) / 20
    spread = max(
        max(abs(x - mean_a) for x, _ in coords[:20]),
        max(abs(x - mean_b) for x, _ in coords[20:]),
    )
    assert abs(mean_a - mean_b) > 2 * spread, (mean_a, mean_b, spread)
    print("ok project_2d")

    codes = vs.one_hot_codes(["b", "a", "b"])
    assert codes == {"a": [1.0, 0.0], "b": [0.0, 1.0]}
    sims = vs.cosine_scores([[1.0, 0.0]], [[2.0, 0.0]])
    approx(sims[0], 1.0, 1e-6)
    print("ok one_hot_codes / cosine_scores")

    print("smoke test passed")


if __name__ == "__main__":
    main()
