import dataclasses

import numpy as np
import pytest

from micrestore.autodiff import RngStream
from micrestore.defects import DefectSpec, PhantomSpec, synth_corpus
from micrestore.errors import DataError, StateError
from micrestore.io.checkpoint import load_checkpoint
from micrestore.io.config import AblationConfig, TrainConfig
from micrestore.io.pgm import read_pgm
from micrestore.losses import LossConfig
from micrestore.nn import BANK, NetConfig
from micrestore.optim import AdamConfig
from micrestore.pipeline import (
    augment_dataset,
    build_ablation_corpus,
    restore,
    restore_files,
    run_ablation,
    summarize,
    synthesize_defects,
    train_cin_gan,
    train_restore_cgan,
)
from micrestore.tasks import ALL_TASKS, TaskId

NET = NetConfig(base_channels=4, depth=2)
S1 = TrainConfig("cin_gan", batch_size=2, max_steps=4, seed=1)
S2 = TrainConfig("restore_cgan", batch_size=2, max_steps=4, seed=2)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    cfg = AblationConfig(pair_counts=[2], repeats=1, augment_n=2, n_eval=2, image_size=16)
    return build_ablation_corpus(cfg, 0, root)


@pytest.fixture(scope="module")
def cin(corpus):
    return train_cin_gan(corpus, S1, NET)


class TestTraining:
    def test_smoke_losses_finite(self, cin):
        assert len(cin.losses) == 4
        assert all(np.isfinite(r[k]) for r in cin.losses for k in ("d_loss", "g_total"))
        assert cin.checkpoint.meta["stage"] == "cin_gan"

    def test_same_seed_same_trajectory(self, corpus, cin):
        again = train_cin_gan(corpus, S1, NET)
        assert again.losses == cin.losses
        other = train_cin_gan(corpus, dataclasses.replace(S1, seed=9), NET)
        assert other.losses != cin.losses

    def test_restore_trajectory_deterministic(self, corpus):
        a = train_restore_cgan(corpus, S2, NET)
        b = train_restore_cgan(corpus, S2, NET)
        assert a.losses == b.losses

    def test_untrained_task_rows_untouched(self, corpus):
        res = train_cin_gan(corpus, dataclasses.replace(S1, tasks=["denoise"]), NET)
        fresh = train_cin_gan(corpus, dataclasses.replace(S1, tasks=["denoise"], max_steps=1), NET)
        G, F = res.checkpoint.store("generator"), fresh.checkpoint.store("generator")
        row = list(ALL_TASKS).index(TaskId.DENOISE)
        for name, t in G.items():
            if G.label(name) == BANK:
                for r in range(NET.num_tasks):
                    if r != row:
                        assert (t.data[r] == 1.0).all() if name.endswith("gamma") else (t.data[r] == 0).all()
                        np.testing.assert_array_equal(t.data[r], F[name].data[r])

    def test_no_pairs(self, tmp_path):
        m = synth_corpus(PhantomSpec("nuclei_blobs", 16), DefectSpec(TaskId.DENOISE), 4, 0.0, RngStream(0), tmp_path)
        with pytest.raises(DataError):
            train_restore_cgan(m, S2, NET)

    def test_writes_checkpoint_and_loss_csv(self, corpus, tmp_path):
        res = train_restore_cgan(corpus, S2, NET, out=tmp_path)
        assert load_checkpoint(res.path).meta["stage"] == "restore_cgan"
        lines = (tmp_path / "restore_losses.csv").read_text().splitlines()
        assert lines[0] == "step,task,d_loss,g_adv,g_content,g_total" and len(lines) == 5

    def test_identity_pairs_converge(self, tmp_path):
        m = synth_corpus(PhantomSpec("nuclei_blobs", 16), DefectSpec(TaskId.DENOISE, gaussian_sigma=0.0),
                         8, 1.0, RngStream(3), tmp_path)
        cfg = TrainConfig("restore_cgan", epochs=100, batch_size=4, max_steps=200, seed=0, optimizer=AdamConfig(lr=2e-3),
                          loss=LossConfig(lam=10.0, content_space="pixel_l1"))
        res = train_restore_cgan(m, cfg, NET)
        first = np.mean([r["g_content"] for r in res.losses[:10]])
        last = np.mean([r["g_content"] for r in res.losses[-10:]])
        assert len(res.losses) == 200 and last < 0.1 * first


class TestAugment:
    def test_zero_is_identity(self, corpus, cin, tmp_path):
        out = augment_dataset(corpus, cin.checkpoint, 0, RngStream(0), tmp_path)
        assert out.to_json_obj(tmp_path) == corpus.to_json_obj(tmp_path)

    def test_counts_and_difference(self, corpus, cin, tmp_path):
        out = augment_dataset(corpus, cin.checkpoint, 5, RngStream(0), tmp_path)
        assert len(out.pairs_for(synthetic=True)) == 15
        assert len(out.pairs_for(synthetic=False)) == len(corpus.pairs)
        for task in ALL_TASKS:
            assert len(out.pairs_for(task, synthetic=True)) == 5
        p = out.pairs_for(synthetic=True)[0]
        assert np.abs(out.load(p.gt, np.float64) - out.load(p.defected, np.float64)).max() > 0

    def test_deterministic(self, corpus, cin, tmp_path):
        a = augment_dataset(corpus, cin.checkpoint, 2, RngStream(4), tmp_path / "a")
        b = augment_dataset(corpus, cin.checkpoint, 2, RngStream(4), tmp_path / "b")
        for pa, pb in zip(a.pairs_for(synthetic=True), b.pairs_for(synthetic=True)):
            assert pa.defected == pb.defected
            assert a.defected[pa.defected].path.read_bytes() == b.defected[pb.defected].path.read_bytes()

    def test_wrong_checkpoint_kind(self, corpus):
        ckpt = train_restore_cgan(corpus, S2, NET).checkpoint
        with pytest.raises(StateError):
            synthesize_defects(ckpt, np.zeros((1, 16, 16)), "denoise", RngStream(0))

    def test_task_without_row(self, corpus, tmp_path):
        single = train_cin_gan(corpus, dataclasses.replace(S1, tasks=["denoise"]), dataclasses.replace(NET, num_tasks=1))
        with pytest.raises(StateError):
            augment_dataset(corpus, single.checkpoint, 1, RngStream(0), tmp_path, tasks=["super_resolve"])


class TestRestore:
    def test_deterministic_and_shape(self, corpus):
        ckpt = train_restore_cgan(corpus, S2, NET).checkpoint
        imgs = [RngStream(i).uniform(-1, 1, (16, 16)) for i in range(3)] + [np.zeros((13, 18))]
        a, b = restore(imgs, ckpt), restore(imgs, ckpt)
        for x, y, src in zip(a, b, imgs):
            np.testing.assert_array_equal(x, y)
            assert x.shape == src.shape and np.abs(x).max() <= 1

    def test_files_round_trip(self, corpus, tmp_path):
        res = train_restore_cgan(corpus, S2, NET, out=tmp_path)
        paths = [corpus.defected[p.defected].path for p in corpus.pairs[:2]]
        written = restore_files(paths, res.path, tmp_path / "out")
        direct = restore([read_pgm(p).data for p in paths], load_checkpoint(res.path))
        for w, d in zip(written, direct):
            assert np.abs(read_pgm(w).data - d).max() <= 1 / 65535 + 1e-12
        assert (tmp_path / "out" / "provenance.json").is_file()

    def test_rejects_cin_checkpoint(self, cin):
        with pytest.raises(StateError):
            restore([np.zeros((16, 16))], cin.checkpoint)

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            restore_files([], tmp_path / "nope.ckpt", tmp_path)


class TestAblation:
    def test_small_corpus_fails_before_training(self, corpus, tmp_path):
        cfg = AblationConfig(pair_counts=[2, 50], repeats=1, n_eval=2, image_size=16)
        with pytest.raises(DataError, match="need 52"):
            run_ablation(cfg, corpus, S1, S2, NET, 0, tmp_path)

    def test_rows_and_determinism(self, corpus, tmp_path):
        cfg = AblationConfig(pair_counts=[1, 2], repeats=1, augment_n=2, n_eval=2, image_size=16,
                             tasks=["denoise", "axial_inpaint"])
        s1, s2 = dataclasses.replace(S1, max_steps=2), dataclasses.replace(S2, max_steps=2)
        rows = run_ablation(cfg, corpus, s1, s2, NET, 5, tmp_path / "a", out_csv=tmp_path / "a.csv")
        again = run_ablation(cfg, corpus, s1, s2, NET, 5, tmp_path / "b")
        assert len(rows) == 2 * 3 * 2
        assert rows == again
        by_arm = {(r[0], r[1], r[3]): r for r in rows}
        assert by_arm[("real_only", 2, "denoise")][6] == 0
        assert by_arm[("cin_gan", 2, "denoise")][6] == 2
        assert by_arm[("separate_gans", 1, "axial_inpaint")][5] == 1
        assert len(summarize(rows)) == 6
        assert (tmp_path / "a.csv").read_text().count("\n") == 13
