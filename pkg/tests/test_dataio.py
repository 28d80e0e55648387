"""Loading, cleaning, normalization, and the windowing protocol."""

from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from metacal import dataio, synthgen
from metacal.dataio import (
    CalibrationRecord,
    InsufficientDataError,
    NormStats,
    SiteDataset,
    TaskSplit,
)

T0 = datetime(2021, 1, 1, tzinfo=timezone.utc)


def record(hour, pm25=10.0, ref=12.0):
    return CalibrationRecord(
        timestamp=T0 + timedelta(hours=hour),
        pm25_raw=pm25, pm10_raw=20.0, temperature=25.0, humidity=50.0,
        pm25_ref=ref,
    )


def csv_text(rows):
    return "\n".join([",".join(dataio.CSV_FIELDS)] + rows) + "\n"


def stamp(hour):
    return (T0 + timedelta(hours=hour)).strftime("%Y-%m-%dT%H:%M:%SZ")


class TestCalibrationRecord:
    def test_reference_may_be_absent(self):
        rec = CalibrationRecord(T0, 10.0, 20.0, 25.0, 50.0, None)
        assert rec.pm25_ref is None

    @pytest.mark.parametrize("kwargs", [
        {"pm25_raw": float("nan")},
        {"temperature": float("inf")},
        {"pm25_raw": -1.0},
        {"pm10_raw": -0.5},
        {"pm25_ref": -2.0},
        {"humidity": 101.0},
        {"humidity": -1.0},
    ])
    def test_invalid_record_rejected(self, kwargs):
        base = dict(timestamp=T0, pm25_raw=10.0, pm10_raw=20.0,
                    temperature=25.0, humidity=50.0, pm25_ref=12.0)
        base.update(kwargs)
        with pytest.raises(ValueError):
            CalibrationRecord(**base)


class TestSiteDataset:
    def test_rejects_empty_and_unordered(self):
        with pytest.raises(ValueError):
            SiteDataset(site_id="x", records=())
        with pytest.raises(ValueError):
            SiteDataset(site_id="x", records=(record(1), record(0)))
        with pytest.raises(ValueError):
            SiteDataset(site_id="x", records=(record(0), record(0)))

    def test_len_counts_records(self):
        site = SiteDataset(site_id="x", records=tuple(record(h) for h in range(5)))
        assert len(site) == 5


class TestLoadSiteCsv:
    def test_roundtrips_generated_site(self, tmp_path):
        site = synthgen.gen_site(synthgen.SiteProfile.sample(0), 30, site_id="s")
        path = tmp_path / "s.csv"
        synthgen.write_site_csv(path, site)
        loaded = dataio.load_site_csv(path, "s")
        assert len(loaded) == 30 and loaded.n_dropped == 0 and loaded.n_gaps == 0
        got = dataio.records_matrix(loaded.records)
        want = dataio.records_matrix(site.records)
        np.testing.assert_allclose(got, want, atol=1e-6)

    def test_malformed_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,pm25\n2021-01-01T00:00:00Z,1\n")
        with pytest.raises(ValueError, match="header"):
            dataio.load_site_csv(path, "s")

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(ValueError, match="empty"):
            dataio.load_site_csv(path, "s")

    def test_invalid_rows_dropped_and_counted(self, tmp_path):
        rows = [
            f"{stamp(0)},10,20,25,50,12",
            f"{stamp(1)},not_a_number,20,25,50,12",
            f"{stamp(2)},10,20,25,50",          # short row
            f"{stamp(3)},-5,20,25,50,12",       # negative particulate
            f"{stamp(4)},10,20,25,130,12",      # humidity out of range
            f"{stamp(5)},11,21,26,51,13",
        ]
        path = tmp_path / "dirty.csv"
        path.write_text(csv_text(rows))
        site = dataio.load_site_csv(path, "s")
        assert len(site) == 2
        assert site.n_dropped == 4

    def test_missing_reference_kept_as_none(self, tmp_path):
        path = tmp_path / "noref.csv"
        path.write_text(csv_text([f"{stamp(0)},10,20,25,50,", f"{stamp(1)},10,20,25,50,12"]))
        site = dataio.load_site_csv(path, "s")
        assert site.records[0].pm25_ref is None
        assert site.records[1].pm25_ref == 12.0

    def test_duplicate_timestamp_keeps_first(self, tmp_path):
        path = tmp_path / "dup.csv"
        path.write_text(csv_text([
            f"{stamp(0)},10,20,25,50,12",
            f"{stamp(0)},99,20,25,50,12",
            f"{stamp(1)},11,20,25,50,12",
        ]))
        site = dataio.load_site_csv(path, "s")
        assert len(site) == 2
        assert site.records[0].pm25_raw == 10.0
        assert site.n_dropped == 1

    def test_rows_sorted_by_time_and_gaps_counted(self, tmp_path):
        path = tmp_path / "shuffled.csv"
        path.write_text(csv_text([
            f"{stamp(3)},12,20,25,50,12",
            f"{stamp(0)},10,20,25,50,12",
            f"{stamp(1)},11,20,25,50,12",
        ]))
        site = dataio.load_site_csv(path, "s")
        assert [r.pm25_raw for r in site.records] == [10.0, 11.0, 12.0]
        assert site.n_gaps == 1

    def test_all_rows_invalid_rejected(self, tmp_path):
        path = tmp_path / "junk.csv"
        path.write_text(csv_text([f"{stamp(0)},x,y,z,w,v"]))
        with pytest.raises(ValueError, match="no valid rows"):
            dataio.load_site_csv(path, "s")


class TestNormStats:
    def test_fit_matches_population_moments(self):
        recs = varied_site(40).records
        # brute-force loop oracle, population (ddof=0) std
        mat = dataio.records_matrix(recs)
        stats = dataio.fit_norm(recs)
        for ch in range(5):
            mean = sum(mat[i, ch] for i in range(40)) / 40
            var = sum((mat[i, ch] - mean) ** 2 for i in range(40)) / 40
            assert abs(stats.mean[ch] - mean) < 1e-10
            assert abs(stats.std[ch] - var ** 0.5) < 1e-10

    def test_too_few_or_constant_rejected(self):
        with pytest.raises(ValueError):
            dataio.fit_norm([record(0)])
        with pytest.raises(ValueError, match="constant"):
            dataio.fit_norm([record(h) for h in range(10)])  # every channel flat

    def test_json_roundtrip(self):
        stats = NormStats(np.arange(1.0, 6.0), np.arange(1.0, 6.0))
        back = NormStats.from_json(stats.to_json())
        np.testing.assert_array_equal(back.mean, stats.mean)
        np.testing.assert_array_equal(back.std, stats.std)

    def test_shape_and_degenerate_std_rejected(self):
        with pytest.raises(ValueError):
            NormStats(np.zeros(4), np.ones(4))
        with pytest.raises(ValueError):
            NormStats(np.zeros(5), np.array([1.0, 1.0, 0.0, 1.0, 1.0]))

    def test_apply_and_denorm_invert(self):
        recs = varied_site(20, seed=1).records
        stats = dataio.fit_norm(recs)
        batch = dataio.apply_norm(recs, stats)
        refs = np.array([r.pm25_ref for r in recs])
        np.testing.assert_allclose(dataio.denorm_predictions(batch.targets, stats), refs)

    def test_unlabeled_records_cannot_be_normalized(self):
        stats = dataio.fit_norm(varied_site(10).records)
        unlabeled = CalibrationRecord(T0, 10.0, 20.0, 25.0, 50.0)
        with pytest.raises(ValueError, match="pm25_ref"):
            dataio.apply_norm([record(0), unlabeled], stats)


def varied_site(hours, seed=0):
    rng = np.random.default_rng(seed)
    recs = [
        CalibrationRecord(
            timestamp=T0 + timedelta(hours=h),
            pm25_raw=float(rng.uniform(5, 50)),
            pm10_raw=float(rng.uniform(10, 80)),
            temperature=float(rng.uniform(18, 35)),
            humidity=float(rng.uniform(30, 95)),
            pm25_ref=float(rng.uniform(5, 50)),
        )
        for h in range(hours)
    ]
    return SiteDataset(site_id="v", records=tuple(recs))


class TestSampleSupportQuery:
    def test_deterministic_and_well_formed(self):
        site = varied_site(200)
        stats = dataio.fit_norm(site.records)
        for seed in range(100):
            a = dataio.sample_support_query(site, 48, 48, seed, stats=stats)
            b = dataio.sample_support_query(site, 48, 48, seed, stats=stats)
            assert a.support_range == b.support_range
            assert a.query_range == b.query_range
            s_lo, s_hi = a.support_range
            q_lo, q_hi = a.query_range
            assert 0 <= s_lo and s_hi == s_lo + 48
            assert s_hi <= q_lo and q_hi == q_lo + 48 <= 200
            np.testing.assert_array_equal(b.support.inputs, a.support.inputs)

    def test_exact_fit_is_forced(self):
        # a 96-hour site admits exactly one 48+48 layout
        site = varied_site(96)
        stats = dataio.fit_norm(site.records)
        for seed in range(10):
            split = dataio.sample_support_query(site, 48, 48, seed, stats=stats)
            assert split.support_range == (0, 48)
            assert split.query_range == (48, 96)

    def test_too_short_site_raises(self):
        site = varied_site(95)
        stats = dataio.fit_norm(site.records)
        with pytest.raises(InsufficientDataError):
            dataio.sample_support_query(site, 48, 48, 0, stats=stats)


class TestSplitTarget:
    def test_default_protocol_layout(self):
        site = varied_site(432)
        split = dataio.split_target(site)
        assert split.support_range == (0, 54)
        assert split.query_range == (54, 72)
        assert split.test_range == (72, 432)
        assert len(split.train) == 54 and len(split.val) == 18 and len(split.test) == 360

    def test_stats_default_comes_from_train_window_only(self):
        site = varied_site(432)
        split = dataio.split_target(site)
        train_only = dataio.fit_norm(site.records[:54])
        np.testing.assert_array_equal(split.stats.mean, train_only.mean)
        np.testing.assert_array_equal(split.stats.std, train_only.std)

    def test_supplied_stats_are_used_verbatim(self):
        site = varied_site(432)
        other = dataio.fit_norm(varied_site(100, seed=9).records)
        split = dataio.split_target(site, stats=other)
        assert split.stats is other
        raw = dataio.records_matrix(site.records[:54])
        np.testing.assert_allclose(
            split.train.inputs, (raw[:, :4] - other.mean[:4]) / other.std[:4])

    def test_zero_val_fraction_gives_no_validation_set(self):
        site = varied_site(432)
        split = dataio.split_target(site, val_fraction=0.0)
        assert split.val is None
        assert split.support_range == (0, 72)
        assert split.query_range == (72, 72)

    def test_too_short_site_raises(self):
        site = varied_site(431)
        with pytest.raises(InsufficientDataError):
            dataio.split_target(site)

    def test_bad_val_fraction_rejected(self):
        site = varied_site(432)
        with pytest.raises(ValueError):
            dataio.split_target(site, val_fraction=1.0)


class TestTaskSplitInvariants:
    def test_overlapping_or_mismatched_ranges_rejected(self):
        site = varied_site(200)
        stats = dataio.fit_norm(site.records)
        sup = dataio.apply_norm(site.records[0:48], stats)
        qry = dataio.apply_norm(site.records[40:88], stats)
        with pytest.raises(ValueError, match="query range"):
            TaskSplit(support=sup, query=qry, support_range=(0, 48),
                      query_range=(40, 88), stats=stats)
        with pytest.raises(ValueError, match="does not match"):
            TaskSplit(support=sup, query=qry, support_range=(0, 40),
                      query_range=(48, 96), stats=stats)


class TestManifest:
    def test_benchmark_manifest_roundtrip(self, tmp_path):
        manifest = synthgen.gen_benchmark(tmp_path, n_sources=2, n_targets=1,
                                          hours=10, seed=0)
        entries = dataio.load_manifest(manifest)
        assert [e.role for e in entries] == ["source", "source", "target"]
        sources, targets = dataio.load_manifest_sites(manifest)
        assert [s.site_id for s in sources] == ["site00", "site01"]
        assert [t.site_id for t in targets] == ["site02"]
        assert all(len(s) == 10 for s in sources + targets)

    def test_unknown_role_rejected(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text('{"sites": [{"site_id": "a", "role": "probe", "path": "a.csv"}]}')
        with pytest.raises(ValueError, match="role"):
            dataio.load_manifest(path)
