import numpy as np
import pytest

from ssle.datagen import GenerationConfig, build_manifest
from ssle.dsp import Waveform
from ssle.evaluate import COLUMNS, METRICS, MetricsReport, evaluate_set, score
from ssle.inference import oracle_enhance, passthrough


@pytest.fixture(scope="module")
def manifest(tmp_path_factory):
    cfg = GenerationConfig(duration_s=0.5, n_pae=1, n_dae=1, n_eval=6, seed=3)
    return build_manifest(cfg, tmp_path_factory.mktemp("m"))


@pytest.fixture(scope="module")
def passthrough_report(manifest):
    return evaluate_set(manifest, lambda r, w: passthrough(w["mixture"]))


def test_passthrough_in_equals_out(passthrough_report):
    assert len(passthrough_report.rows) == 6
    for row in passthrough_report.rows:
        for m in ("si_sdr", "seg_snr", "lsd"):
            assert row[f"{m}_in"] == row[f"{m}_out"]
    assert passthrough_report.improvement("si_sdr") == 0.0


def test_aggregates_are_recomputable(passthrough_report):
    rows = passthrough_report.rows
    for agg in passthrough_report.aggregate(("snr_db",)):
        members = [r for r in rows if r["snr_db"] == agg["snr_db"]]
        assert agg["count"] == len(members)
        for m in METRICS:
            assert agg[m] == pytest.approx(sum(r[m] for r in members) / len(members), abs=1e-9)
    assert sum(a["count"] for a in passthrough_report.aggregate()) == 6


def test_csv_round_trip(tmp_path, passthrough_report):
    passthrough_report.write(tmp_path)
    back = MetricsReport.read_csv(tmp_path / "metrics.csv")
    assert back.rows == passthrough_report.rows
    header = (tmp_path / "metrics.csv").read_text().splitlines()[0]
    assert tuple(header.split(",")) == COLUMNS
    summary = (tmp_path / "metrics_summary.csv").read_text().splitlines()
    assert summary[-1].startswith("*,*,*,6,")


def test_table_lists_each_snr(passthrough_report):
    text = passthrough_report.table()
    for s in ("-5", "+0", "+5"):
        assert f"snr {s} dB" in text
    assert "all conditions" in text


def test_oracle_improves(manifest):
    rep = evaluate_set(manifest, lambda r, w: oracle_enhance(w["mixture"], w["clean"], w["interference"]),
                       components=("clean", "mixture", "interference"))
    assert rep.improvement("si_sdr") > 0
    assert rep.improvement("lsd") < 0


def test_missing_files_listed_together(tmp_path):
    m = build_manifest(GenerationConfig(duration_s=0.25, n_pae=1, n_dae=1, n_eval=3), tmp_path)
    gone = [m.path(r, "clean") for r in m.split("eval")[:2]]
    for p in gone:
        p.unlink()
    with pytest.raises(FileNotFoundError) as info:
        evaluate_set(m, lambda r, w: w["mixture"])
    for p in gone:
        assert str(p) in str(info.value)


def test_score_fields(manifest):
    r = manifest.split("eval")[0]
    c, y = manifest.load(r, "clean"), manifest.load(r, "mixture")
    row = score(c, y, c, r)
    assert set(row) == set(COLUMNS)
    assert row["si_sdr_out"] == 60.0 and row["lsd_out"] == 0.0 and row["seg_snr_out"] == 35.0


def test_score_rejects_length_mismatch(manifest):
    r = manifest.split("eval")[0]
    c = manifest.load(r, "clean")
    with pytest.raises(ValueError, match="length"):
        score(Waveform(np.zeros(len(c) - 1), 16000), c, c, r)
