import numpy as np
import pytest

from viewdesc import checkpoint
from viewdesc.nn import Network, default_network_spec
from viewdesc.objective import LossConfig
from viewdesc.scene.dataset import TEMPLATE, TRAINING, load_arrays
from viewdesc.trainer import (BatchPool, BatchSizeError, MiniBatch, Schedule, TrainingDivergedError,
                              assemble_minibatch, bootstrap_triplets, build_initial_triplets, build_pairs,
                              epoch_queues, mine_hard_negatives, train, train_step, write_log)

from oracles import (batch_problems, bootstrap_problems, initial_mix_problems, pair_problems, synthetic_pool,
                     triplet_problems)


def test_schedule_arithmetic():
    s = Schedule()
    assert s.lr_at(250) == pytest.approx(0.0081)
    for e in range(400):
        assert s.lr_at(e) == pytest.approx(0.01 * 0.9 ** (e // 100))
    assert s.total_epochs == 1100
    assert [p[0] for p in s.phases()] == ["initial", "bootstrap1", "bootstrap2", "final"]
    assert s.lr_at(800) == pytest.approx(0.01 * 0.9**8 * 0.1)
    with pytest.raises(ValueError):
        Schedule(initial_lr=0)


def test_single_object_batch():
    pool = synthetic_pool(1)
    batch = assemble_minibatch(pool, 4, np.random.default_rng(0))
    assert sum(1 for t in batch.templates) >= 2
    assert batch_problems(batch, pool, 4) == []


def test_second_template_added_when_samples_share_one():
    # three training views all closest to template 0 -> a random second template joins
    pool = BatchPool([0, 0, 0], [[0, 80], [5, 85], [10, 88]], [0, 0, 0], [[0, 90], [0, 0], [180, 0]], ["none"])
    assert set(pool.closest) == {0}
    batch = assemble_minibatch(pool, 64, np.random.default_rng(1))
    assert len(batch.train) == 3 and len(batch.templates) == 2 and batch.templates[0] == 0


def test_batch_determinism():
    pool = synthetic_pool(5)
    a = assemble_minibatch(pool, 32, np.random.default_rng(42))
    b = assemble_minibatch(pool, 32, np.random.default_rng(42))
    assert a == b


def test_batch_too_small():
    pool = synthetic_pool(2)
    with pytest.raises(BatchSizeError):
        assemble_minibatch(pool, 2, np.random.default_rng(0))


def test_epoch_consumes_every_sample_once():
    pool = synthetic_pool(3)
    rng = np.random.default_rng(0)
    queues = epoch_queues(pool, rng)
    seen = []
    while (batch := assemble_minibatch(pool, 40, rng, queues)) is not None:
        assert batch_problems(batch, pool, 40) == []
        seen += batch.train
    assert sorted(seen) == list(range(len(pool.train_classes)))


def test_pairs_and_triplets_oracle():
    pool = synthetic_pool(5)
    rng = np.random.default_rng(3)
    for _ in range(30):
        batch = assemble_minibatch(pool, 64, rng)
        pairs = build_pairs(batch, pool)
        assert pair_problems(batch, pool, pairs) == []
        trip = build_initial_triplets(batch, pool, rng)
        assert len(trip) == 3 * len(batch.train)
        assert triplet_problems(batch, pool, trip, 3, pairs) == []
        assert initial_mix_problems(batch, pool, trip) == []
        desc = rng.normal(size=(batch.size, 8))
        extra = bootstrap_triplets(batch, pool, desc)
        assert len(extra) == 2 * len(batch.train)
        assert bootstrap_problems(batch, pool, extra, desc) == []


def test_bootstrap_skips_the_similar_template():
    pool = BatchPool([0], [[0, 10]], [0, 0, 0], [[0, 10], [90, 10], [180, 10]], ["none"])
    batch = MiniBatch([0], [0, 1, 2])
    # descriptors: the similar template (row 1) is nearest, row 3 next
    desc = np.array([[0.0], [0.0], [5.0], [1.0]])
    trip = bootstrap_triplets(batch, pool, desc)
    assert (0, 1, 3) in trip and all(t[2] != 1 for t in trip)


def test_mine_hard_negatives_oracle():
    pool = synthetic_pool(3, 0, 1)
    rng = np.random.default_rng(0)
    ft = rng.normal(size=(len(pool.train_classes), 4))
    fm = rng.normal(size=(len(pool.template_classes), 4))
    mined = mine_hard_negatives(pool, ft, fm)
    for i in range(0, len(ft), 7):
        c = pool.train_classes[i]
        j = pool.closest[i]
        d = np.sum((fm - ft[i]) ** 2, axis=1)
        same = [t for t in range(len(fm)) if pool.template_classes[t] == c and pool.angles[i, t] > pool.angles[i, j]]
        other = [t for t in range(len(fm)) if pool.template_classes[t] != c]
        assert mined[i] == [min(same, key=lambda t: d[t]), min(other, key=lambda t: d[t])]


def test_pool_needs_two_templates():
    with pytest.raises(ValueError):
        BatchPool([0], [[0, 0]], [0], [[0, 0]], ["none"])


@pytest.fixture(scope="module")
def tiny_arrays(tiny_manifest):
    tr = tiny_manifest.select([TRAINING])
    tm = tiny_manifest.select([TEMPLATE])
    Xr, yr, pr, _ = load_arrays(tiny_manifest, tr)
    Xm, ym, pm, _ = load_arrays(tiny_manifest, tm)
    return Xr, yr, pr, Xm, ym, pm, tiny_manifest.symmetries


def test_each_member_forwards_once(tiny_arrays):
    Xr, yr, pr, Xm, ym, pm, sym = tiny_arrays
    pool = BatchPool(yr, pr, ym, pm, sym)
    net = Network.initialize(default_network_spec(descriptor_dim=8), seed=0)
    rng = np.random.default_rng(0)
    for bootstrap in (False, True):
        batch = assemble_minibatch(pool, 24, rng)
        before = net.forward_calls
        train_step(net, Xr, Xm, batch, pool, LossConfig(), 0.001, 0.9, rng, bootstrap)
        assert net.forward_calls - before == batch.size
        assert len(set(batch.train)) + len(set(batch.templates)) == batch.size


SMOKE = dict(initial_epochs=5, epochs_per_bootstrap=1, bootstrap_rounds=2, final_epochs=2, batch_size=32,
             decay_every=2)


def test_smoke_schedule_and_determinism(tiny_arrays, tmp_path):
    Xr, yr, pr, Xm, ym, pm, sym = tiny_arrays
    spec = default_network_spec(descriptor_dim=8)
    runs = []
    for _ in range(2):
        net, hist = train(Xr, yr, pr, Xm, ym, pm, sym, spec, schedule=Schedule(seed=3, **SMOKE))
        runs.append((checkpoint.digest(net), hist))
    assert runs[0][0] == runs[1][0]
    hist = runs[0][1]
    assert [h.epoch for h in hist] == list(range(9))
    assert [h.phase for h in hist] == ["initial"] * 5 + ["bootstrap1", "bootstrap2", "final", "final"]
    assert hist[4].lr == pytest.approx(0.01 * 0.9**2)
    assert all(np.isfinite(h.total) for h in hist)
    sha = checkpoint.save(net, tmp_path / "m.pdsc")
    assert checkpoint.digest(checkpoint.load(tmp_path / "m.pdsc")) == sha
    write_log(tmp_path / "log.tsv", hist)
    lines = (tmp_path / "log.tsv").read_text().splitlines()
    assert lines[0].split("\t") == ["epoch", "lr", "tripletLoss", "pairLoss", "regTerm", "wallTimeSec"]
    assert len(lines) == 10


def test_different_seed_changes_model(tiny_arrays):
    Xr, yr, pr, Xm, ym, pm, sym = tiny_arrays
    spec = default_network_spec(descriptor_dim=8)
    sched = dict(SMOKE, initial_epochs=1, bootstrap_rounds=0, final_epochs=0)
    a, _ = train(Xr, yr, pr, Xm, ym, pm, sym, spec, schedule=Schedule(seed=1, **sched))
    b, _ = train(Xr, yr, pr, Xm, ym, pm, sym, spec, schedule=Schedule(seed=2, **sched))
    assert checkpoint.digest(a) != checkpoint.digest(b)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_last_good(tiny_arrays):
    Xr, yr, pr, Xm, ym, pm, sym = tiny_arrays
    spec = default_network_spec(descriptor_dim=8)
    sched = Schedule(initial_lr=1e6, per_sample_mean=False, **dict(SMOKE, bootstrap_rounds=0, final_epochs=0))
    with pytest.raises(TrainingDivergedError) as exc:
        train(Xr, yr, pr, Xm, ym, pm, sym, spec, schedule=sched)
    assert all(np.all(np.isfinite(t)) for t in exc.value.network.params.tensors)


def test_batch_size_floor(tiny_arrays):
    Xr, yr, pr, Xm, ym, pm, sym = tiny_arrays
    with pytest.raises(BatchSizeError):
        train(Xr, yr, pr, Xm, ym, pm, sym, default_network_spec(), schedule=Schedule(batch_size=8))
