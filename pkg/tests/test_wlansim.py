import numpy as np
import pytest

from pfalloc import DomainError, individual_channel_baseline
from pfalloc.wlansim import (
    CSV_HEADER,
    Drop,
    MetricsRecord,
    RATE_TABLE_80211A,
    Scenario,
    allocate_mt,
    allocate_pf,
    allocate_ssaf,
    allocate_sstf,
    generate_drop,
    mean_snr_db,
    run_experiment,
    sample_snr_db,
    snr_to_rate,
    torus_distance,
    write_metrics_csv,
)


def make_drop(rates, snr_db=None):
    """Hand-built drop for scheme unit tests; positions are placeholders."""
    rates = np.asarray(rates, dtype=float)
    U, S = rates.shape
    snr = np.asarray(snr_db, dtype=float) if snr_db is not None else rates.copy()
    return Drop(
        replication=0,
        ap_positions=np.zeros((S, 2)),
        sta_positions=np.zeros((U, 2)),
        snr_db=snr,
        rates=rates,
        eligible=np.any(rates > 0, axis=1),
    )


class TestTorusDistance:
    def test_wrap_beats_direct(self):
        assert torus_distance([0.0, 0.0], [60.0, 0.0], 80.0, 80.0) == pytest.approx(20.0)

    def test_direct_shorter(self):
        assert torus_distance([0.0, 0.0], [30.0, 40.0], 80.0, 80.0) == pytest.approx(50.0)

    def test_same_point(self):
        assert torus_distance([5.0, 7.0], [5.0, 7.0], 80.0, 80.0) == 0.0


class TestMeanSnr:
    def test_cell_edge_reference(self):
        sc = Scenario(num_stas=1)
        assert mean_snr_db(10.0, sc) == pytest.approx(10.0)

    def test_one_octave_beyond_edge(self):
        sc = Scenario(num_stas=1)
        assert mean_snr_db(20.0, sc) == pytest.approx(10.0 - 30.0 * np.log10(2.0), abs=1e-9)

    def test_near_field_clamp(self):
        sc = Scenario(num_stas=1)
        assert mean_snr_db(0.5, sc) == mean_snr_db(1.0, sc)


class TestSampleSnr:
    def test_zero_sigma_returns_mean(self, rng):
        m = np.array([[3.0, 7.0]])
        assert np.array_equal(sample_snr_db(m, rng, 0.0), m)

    def test_fixed_seed_reproducible(self):
        a = sample_snr_db(np.zeros((4, 4)), np.random.default_rng(9), 6.0)
        b = sample_snr_db(np.zeros((4, 4)), np.random.default_rng(9), 6.0)
        assert np.array_equal(a, b)

    def test_empirical_std(self):
        draws = sample_snr_db(np.zeros(100_000), np.random.default_rng(1), 6.0)
        assert draws.std() == pytest.approx(6.0, abs=0.1)


class TestSnrToRate:
    def test_table_lookups(self):
        assert snr_to_rate(15.0) == 18.0  # 18 Mbit/s needs 13 dB, 24 needs 16
        assert snr_to_rate(5.0) == 0.0
        assert snr_to_rate(29.0) == 54.0  # threshold inclusive
        assert snr_to_rate(12.9) == 12.0
        assert snr_to_rate(-40.0) == 0.0

    def test_vectorized(self):
        out = snr_to_rate(np.array([5.0, 10.0, 29.0]))
        assert np.array_equal(out, [0.0, 6.0, 54.0])


class TestScenario:
    def test_defaults(self):
        sc = Scenario(num_stas=8)
        assert sc.num_aps == 16
        assert sc.edge_distance == 10.0
        assert sc.hotspot_load == pytest.approx(1 / 16)
        assert sc.extent == (80.0, 80.0)

    def test_hotspot_load_bounds(self):
        with pytest.raises(DomainError):
            Scenario(num_stas=8, distribution="hotspot", hotspot_load=0.01)

    def test_dict_round_trip(self):
        sc = Scenario(num_stas=8, distribution="hotspot", hotspot_load=0.5, master_seed=7)
        assert Scenario.from_dict(sc.to_dict()) == sc

    def test_unknown_field_rejected(self):
        with pytest.raises(DomainError):
            Scenario.from_dict({"num_stas": 4, "bogus": 1})


class TestGenerateDrop:
    def test_deterministic(self):
        sc = Scenario(num_stas=12, master_seed=5)
        a = generate_drop(sc, 3)
        b = generate_drop(sc, 3)
        assert np.array_equal(a.sta_positions, b.sta_positions)
        assert np.array_equal(a.snr_db, b.snr_db)

    def test_replications_differ(self):
        sc = Scenario(num_stas=12, master_seed=5)
        assert not np.array_equal(generate_drop(sc, 0).snr_db, generate_drop(sc, 1).snr_db)

    def test_rates_come_from_table(self):
        drop = generate_drop(Scenario(num_stas=30, master_seed=2), 0)
        table_rates = {r for _, r in RATE_TABLE_80211A}
        assert set(np.unique(drop.rates)) <= table_rates

    def test_full_hotspot_confines_stations(self):
        sc = Scenario(num_stas=40, distribution="hotspot", hotspot_load=1.0, master_seed=8)
        drop = generate_drop(sc, 0)
        d = np.abs(drop.sta_positions - drop.ap_positions[0])
        d = np.minimum(d, np.array(sc.extent) - d)
        assert np.all(d < sc.ap_spacing / 2)

    def test_partial_hotspot_splits_population(self):
        sc = Scenario(num_stas=40, distribution="hotspot", hotspot_load=0.5, master_seed=8)
        drop = generate_drop(sc, 0)
        d = np.abs(drop.sta_positions - drop.ap_positions[0])
        d = np.minimum(d, np.array(sc.extent) - d)
        inside = np.all(d < sc.ap_spacing / 2, axis=1)
        assert inside.sum() == 20


class TestAllocateMT:
    def test_tied_winners_split_channel(self):
        P, T = allocate_mt(make_drop([[54.0], [54.0], [6.0]]))
        assert np.allclose(P.ravel(), [0.5, 0.5, 0.0])
        assert np.allclose(T, [27.0, 27.0, 0.0])

    def test_single_eligible_user_takes_all(self):
        P, T = allocate_mt(make_drop([[7.0, 9.0]]))
        assert np.array_equal(P, [[1.0, 1.0]])
        assert T[0] == 16.0

    def test_disjoint_winners(self):
        P, T = allocate_mt(make_drop([[54.0, 1.0], [1.0, 54.0]]))
        assert np.array_equal(P, np.eye(2))
        assert np.allclose(T, [54.0, 54.0])

    def test_dead_channel_left_idle(self):
        P, _ = allocate_mt(make_drop([[6.0, 0.0], [1.0, 0.0]]))
        assert np.all(P[:, 1] == 0.0)


class TestAllocateSSTF:
    def test_harmonic_split_equalizes_throughput(self):
        P, T = allocate_sstf(make_drop([[54.0], [6.0]]))
        assert np.allclose(T, [5.4, 5.4])
        assert np.allclose(P.ravel(), [0.1, 0.9])

    def test_single_member_gets_own_rate(self):
        _, T = allocate_sstf(make_drop([[36.0]]))
        assert T[0] == 36.0

    def test_zero_rate_on_strongest_ap_means_outage(self):
        # strongest signal on AP 0 but no service there; stays unassociated
        drop = make_drop([[0.0, 6.0]], snr_db=[[20.0, 7.0]])
        P, T = allocate_sstf(drop)
        assert T[0] == 0.0 and np.all(P == 0.0)

    def test_intra_cell_equality_on_random_drop(self):
        drop = generate_drop(Scenario(num_stas=40, master_seed=77), 0)
        _, T = allocate_sstf(drop)
        assoc = np.argmax(drop.snr_db, axis=1)
        for k in range(drop.num_aps):
            members = (assoc == k) & (T > 0)
            if members.sum() >= 2:
                assert np.ptp(T[members]) <= 1e-9


class TestAllocateSSAF:
    def test_equal_airtime(self):
        P, T = allocate_ssaf(make_drop([[54.0], [6.0]]))
        assert np.allclose(P.ravel(), [0.5, 0.5])
        assert np.allclose(T, [27.0, 3.0])

    def test_identical_members(self):
        _, T = allocate_ssaf(make_drop([[12.0], [12.0], [12.0]]))
        assert np.allclose(T, 4.0)


class TestAllocatePF:
    def test_worked_example_drop(self):
        _, T = allocate_pf(make_drop([[1.0, 2.0], [1.0, 3.0]]))
        assert np.allclose(T, [1.5, 2.25], atol=1e-6)

    def test_ineligible_users_get_zero(self):
        drop = make_drop([[6.0, 9.0], [0.0, 0.0]])
        P, T = allocate_pf(drop)
        assert T[1] == 0.0 and np.all(P[1] == 0.0)
        assert np.allclose(T[0], 15.0, atol=1e-6)

    def test_no_eligible_users_raises(self):
        with pytest.raises(DomainError):
            allocate_pf(make_drop([[0.0], [0.0]]))


class TestSchemeInvariants:
    def test_mt_total_is_maximal_and_pf_beats_baseline(self):
        # high edge SNR makes every rate positive, so the baseline bound applies
        sc = Scenario(num_stas=12, edge_snr_db=45.0, master_seed=31)
        for rep in range(3):
            drop = generate_drop(sc, rep)
            totals = {}
            for name, fn in [("MT", allocate_mt), ("SS-TF", allocate_sstf),
                             ("SS-AF", allocate_ssaf), ("PF", allocate_pf)]:
                P, T = fn(drop)
                totals[name] = T.sum()
                used = P.sum(axis=0) > 0
                assert np.allclose(P[:, used].sum(axis=0), 1.0, atol=1e-9)
                assert np.allclose(T, (P * drop.rates).sum(axis=1), atol=1e-9)
            assert totals["MT"] >= max(totals.values()) - 1e-9
            T_pf = allocate_pf(drop)[1]
            base = individual_channel_baseline(drop.eligible_rate_matrix())
            assert np.all(T_pf[drop.eligible] >= base - 1e-9)


class TestRunExperiment:
    def test_record_layout_and_determinism(self, tmp_path):
        sc = Scenario(num_stas=6, replications=3, master_seed=99)
        records = run_experiment(sc)
        assert len(records) == 12
        assert [r.replication for r in records] == [0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]
        assert [r.scheme for r in records[:4]] == ["MT", "SS-TF", "SS-AF", "PF"]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_metrics_csv(records, p1)
        write_metrics_csv(run_experiment(sc), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_parallel_matches_serial(self, tmp_path):
        sc = Scenario(num_stas=6, replications=4, master_seed=41)
        serial = run_experiment(sc, workers=1)
        parallel = run_experiment(sc, workers=2)
        assert serial == parallel

    def test_scheme_subset_and_unknown(self):
        sc = Scenario(num_stas=5, replications=1, master_seed=1)
        records = run_experiment(sc, schemes=("PF",))
        assert [r.scheme for r in records] == ["PF"]
        with pytest.raises(DomainError):
            run_experiment(sc, schemes=("PF", "NOPE"))

    def test_outage_counts_all_placed_users(self):
        sc = Scenario(num_stas=10, replications=1, master_seed=13, outage_threshold=1.0)
        (record,) = run_experiment(sc, schemes=("PF",))
        drop = generate_drop(sc, 0)
        _, T = allocate_pf(drop)
        assert record.outage_prob == pytest.approx((T < 1.0).mean())

    def test_csv_format(self, tmp_path):
        rec = MetricsRecord("PF", 6, 0.0625, 0, 123.456789, 0.7654321, 0.125)
        path = tmp_path / "out.csv"
        write_metrics_csv([rec], path)
        lines = path.read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert lines[1] == "PF,6,0.0625,0,123.457,0.765432,0.125"
