import numpy as np
import pytest

from elfcore.errors import (
    CardinalityMismatch,
    IndexOutOfRange,
    InvalidSpec,
    KTooLarge,
    PruneNotActive,
    RegrowCollision,
)
from elfcore.sparse import (
    HeapProbe,
    NMGroupSpec,
    apply_mask_update,
    gather_row,
    init_random,
    integrate_rows,
    select_k_smallest,
)


def random_bank(rng, max_m=16, max_pre=6):
    m = int(rng.integers(1, max_m + 1))
    n = int(rng.integers(1, m + 1))
    spec = NMGroupSpec(n, m, int(rng.integers(1, 5)))
    return init_random(spec, int(rng.integers(1, max_pre + 1)), int(rng.integers(1 << 30)), 1.0)


def dense_from_cells(bank):
    w = np.zeros((bank.n_pre, bank.n_post), dtype=np.int64)
    for j in range(bank.n_pre):
        for g in range(bank.spec.group_count):
            for o, v in zip(bank.indices[j, g], bank.values[j, g]):
                w[j, g * bank.spec.m_total + o] = v
    return w


def test_spec_from_sparsity():
    spec = NMGroupSpec.for_layer(256, 0.8, 4)
    assert (spec.n_keep, spec.m_total) == (13, 64)
    assert spec.sparsity == pytest.approx(1 - 13 / 64)
    assert round(spec.sparsity, 3) == 0.797


@pytest.mark.parametrize("n,m", [(0, 4), (5, 4)])
def test_invalid_spec(n, m):
    with pytest.raises(InvalidSpec):
        NMGroupSpec(n, m)


def test_dense_group_holds_every_index():
    bank = init_random(NMGroupSpec(8, 8, 2), 3, seed=1, scale=0.5)
    assert (bank.indices == np.arange(8)).all()
    assert bank.stats().sparsity == 0.0


def test_init_is_deterministic_and_well_formed():
    spec = NMGroupSpec(13, 64, 4)
    a = init_random(spec, 20, seed=7, scale=0.5)
    b = init_random(spec, 20, seed=7, scale=0.5)
    assert a.equals(b)
    a.check()
    assert np.abs(a.values).max() <= 64
    assert a.stats().sparsity == pytest.approx(1 - 13 / 64)
    assert not a.equals(init_random(spec, 20, seed=8, scale=0.5))


def test_gather_row_dense_group_in_order():
    bank = init_random(NMGroupSpec(4, 4, 2), 2, seed=0, scale=0.5)
    posts = [p for p, _ in gather_row(bank, 1)]
    assert posts == list(range(8))


def test_gather_row_single_connection():
    bank = init_random(NMGroupSpec(1, 5, 3), 4, seed=0, scale=0.5)
    row = gather_row(bank, 2)
    assert len(row) == 3
    assert [p // 5 for p, _ in row] == [0, 1, 2]


def test_gather_row_out_of_range():
    bank = init_random(NMGroupSpec(1, 2, 1), 2, seed=0, scale=0.5)
    with pytest.raises(IndexOutOfRange):
        gather_row(bank, 2)


def test_spike_integration_equals_dense_masked_matvec(rng):
    for _ in range(500):
        bank = random_bank(rng)
        spikes = rng.random(bank.n_pre) < 0.5
        dense = dense_from_cells(bank)
        want = spikes.astype(np.int64) @ dense
        assert np.array_equal(integrate_rows(bank, np.flatnonzero(spikes)), want)
        via_rows = np.zeros(bank.n_post, dtype=np.int64)
        for j in np.flatnonzero(spikes):
            for p, w in gather_row(bank, int(j)):
                via_rows[p] += w
        assert np.array_equal(via_rows, want)


def test_integrate_subset_of_groups(rng):
    bank = init_random(NMGroupSpec(3, 8, 4), 10, seed=3, scale=1.0)
    rows = np.array([0, 4, 9])
    parts = sum(integrate_rows(bank, rows, [g]) for g in range(4))
    assert np.array_equal(parts, integrate_rows(bank, rows))


def full_sort_smallest(bank, j, g, k):
    cell = sorted(zip(bank.indices[j, g].tolist(), bank.values[j, g].tolist()), key=lambda p: (abs(p[1]), p[0]))
    return cell[:k]


def test_select_k_edge_cases():
    bank = init_random(NMGroupSpec(5, 9, 2), 3, seed=2, scale=1.0)
    assert select_k_smallest(bank, 0, 0, 0) == []
    everything = select_k_smallest(bank, 0, 1, 5)
    assert sorted(o for o, _ in everything) == bank.indices[0, 1].tolist()
    with pytest.raises(KTooLarge):
        select_k_smallest(bank, 0, 0, 6)


def test_select_k_matches_full_sort_with_ties(rng):
    for _ in range(2000):
        bank = random_bank(rng)
        # squash weights to a few levels so ties are common
        bank.values[:] = rng.integers(-3, 4, bank.values.shape)
        j = int(rng.integers(bank.n_pre))
        g = int(rng.integers(bank.spec.group_count))
        k = int(rng.integers(0, bank.spec.n_keep + 1))
        probe = HeapProbe()
        got = select_k_smallest(bank, j, g, k, probe=probe)
        assert got == full_sort_smallest(bank, j, g, k)
        assert probe.peak_slots <= k


def test_prune_equal_to_regrow_resets_values():
    bank = init_random(NMGroupSpec(3, 6, 1), 1, seed=0, scale=1.0)
    before = bank.indices[0, 0].copy()
    apply_mask_update(bank, 0, 0, before.tolist(), [(int(o), 0) for o in before])
    assert np.array_equal(bank.indices[0, 0], before)
    assert not bank.values[0, 0].any()


def test_empty_update_is_identity():
    bank = init_random(NMGroupSpec(3, 6, 2), 2, seed=0, scale=1.0)
    ref = bank.copy()
    apply_mask_update(bank, 1, 1, [], [])
    assert bank.equals(ref)


def test_mask_update_errors_leave_bank_untouched():
    bank = init_random(NMGroupSpec(2, 6, 1), 1, seed=0, scale=1.0)
    ref = bank.copy()
    active = bank.indices[0, 0].tolist()
    inactive = [o for o in range(6) if o not in active]
    with pytest.raises(CardinalityMismatch):
        apply_mask_update(bank, 0, 0, [active[0]], [])
    with pytest.raises(PruneNotActive):
        apply_mask_update(bank, 0, 0, [inactive[0]], [(inactive[1], 0)])
    with pytest.raises(RegrowCollision):
        apply_mask_update(bank, 0, 0, [active[0]], [(active[1], 0)])
    with pytest.raises(RegrowCollision):
        apply_mask_update(bank, 0, 0, [active[0], active[1]], [(inactive[0], 0), (inactive[0], 0)])
    assert bank.equals(ref)


def test_mask_update_fuzz_keeps_n_per_group(rng):
    bank = init_random(NMGroupSpec(5, 12, 3), 4, seed=9, scale=1.0)
    for _ in range(3000):
        j, g = int(rng.integers(4)), int(rng.integers(3))
        active = bank.indices[j, g].tolist()
        k = int(rng.integers(0, 6))
        prune = rng.choice(active, k, replace=False).tolist() if k else []
        free = sorted(set(range(12)) - (set(active) - set(prune)))
        grown = rng.choice(free, k, replace=False).tolist() if k else []
        apply_mask_update(bank, j, g, prune, [(o, int(rng.integers(-5, 5))) for o in grown])
        bank.check()
    assert bank.stats().sparsity == pytest.approx(1 - 5 / 12)


def test_dense_and_mask_views_agree():
    bank = init_random(NMGroupSpec(2, 4, 2), 3, seed=0, scale=1.0)
    assert np.array_equal(bank.mask(), dense_from_cells(bank) != 0) or bank.mask().sum() == 12
    assert np.array_equal(bank.dense(), dense_from_cells(bank))


def test_export_text_lists_every_cell():
    bank = init_random(NMGroupSpec(1, 2, 2), 2, seed=0, scale=0.5)
    lines = bank.export_text().strip().splitlines()
    assert len(lines) == 4
    assert lines[0].startswith("0 0: ")
