"""Batch evaluation of an enhancer over the held-out split."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import DatasetManifest, UtteranceRecord
from .dsp import stft
from .metrics import lsd, seg_snr, si_sdr

COLUMNS = ("id", "room", "noise", "snr_db", "si_sdr_in", "si_sdr_out",
           "seg_snr_in", "seg_snr_out", "lsd_in", "lsd_out")
METRICS = COLUMNS[4:]


@dataclass
class MetricsReport:
    rows: list = field(default_factory=list)

    def aggregate(self, keys=("room", "noise", "snr_db")) -> list:
        groups = {}
        for row in self.rows:
            groups.setdefault(tuple(row[k] for k in keys), []).append(row)
        out = []
        for key in sorted(groups):
            rows = groups[key]
            agg = dict(zip(keys, key))
            agg["count"] = len(rows)
            agg.update({m: float(np.mean([r[m] for r in rows])) for m in METRICS})
            out.append(agg)
        return out

    def mean(self, metric: str, **where) -> float:
        vals = [r[metric] for r in self.rows if all(r[k] == v for k, v in where.items())]
        return float(np.mean(vals))

    def improvement(self, base: str, **where) -> float:
        """Mean (out - in) for a metric family, e.g. ``"si_sdr"``."""
        return self.mean(f"{base}_out", **where) - self.mean(f"{base}_in", **where)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_cell(r[c]) for c in COLUMNS])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ("room", "noise", "snr_db", "count", *METRICS)
        w.writerow(header)
        for agg in self.aggregate():
            w.writerow([_cell(agg[c]) for c in header])
        for a in self.aggregate(("snr_db",)):
            w.writerow(["*", "*", _cell(a["snr_db"]), a["count"], *[_cell(a[m]) for m in METRICS]])
        overall = {m: self.mean(m) for m in METRICS}
        w.writerow(["*", "*", "*", len(self.rows), *[_cell(overall[m]) for m in METRICS]])
        return buf.getvalue()

    def table(self) -> str:
        lines = [f"{'condition':<28}{'n':>3}  {'SI-SDR in':>9} {'out':>7}  "
                 f"{'segSNR in':>9} {'out':>7}  {'LSD in':>7} {'out':>7}"]
        rows = self.aggregate(("snr_db",)) + [
            {"snr_db": "all", "count": len(self.rows), **{m: self.mean(m) for m in METRICS}}]
        for a in rows:
            name = f"snr {a['snr_db']:+g} dB" if a["snr_db"] != "all" else "all conditions"
            lines.append(f"{name:<28}{a['count']:>3}  {a['si_sdr_in']:>9.2f} {a['si_sdr_out']:>7.2f}  "
                         f"{a['seg_snr_in']:>9.2f} {a['seg_snr_out']:>7.2f}  "
                         f"{a['lsd_in']:>7.2f} {a['lsd_out']:>7.2f}")
        return "\n".join(lines)

    def write(self, out_dir, stem: str = "metrics"):
        out_dir = Path(out_dir)
        (out_dir / f"{stem}.csv").write_text(self.to_csv(), encoding="utf-8")
        (out_dir / f"{stem}_summary.csv").write_text(self.summary_csv(), encoding="utf-8")

    @classmethod
    def read_csv(cls, path) -> MetricsReport:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = []
            for r in csv.DictReader(fh):
                rows.append({k: (v if k in ("id", "room", "noise") else float(v)) for k, v in r.items()})
        return cls(rows)


def _cell(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def score(est, mixture, clean, record: UtteranceRecord, seg_frame: int = 512) -> dict:
    ref_mag = stft(clean).magnitude()
    return {
        "id": record.id, "room": record.room_id, "noise": record.noise_kind,
        "snr_db": float(record.snr_db),
        "si_sdr_in": si_sdr(mixture, clean), "si_sdr_out": si_sdr(est, clean),
        "seg_snr_in": seg_snr(mixture, clean, seg_frame), "seg_snr_out": seg_snr(est, clean, seg_frame),
        "lsd_in": lsd(stft(mixture).magnitude(), ref_mag), "lsd_out": lsd(stft(est).magnitude(), ref_mag),
    }


def evaluate_set(manifest: DatasetManifest, enhancer, components=("clean", "mixture"),
                 seg_frame: int = 512) -> MetricsReport:
    """Score ``enhancer(record, waves) -> Waveform`` on every eval utterance.

    ``waves`` maps each requested component name to its loaded Waveform.
    """
    records = manifest.split("eval")
    missing = [str(manifest.path(r, c)) for r in records for c in components
               if c not in r.files or not manifest.path(r, c).exists()]
    if missing:
        raise FileNotFoundError("missing evaluation files:\n  " + "\n  ".join(missing))
    report = MetricsReport()
    for r in records:
        waves = {c: manifest.load(r, c) for c in components}
        est = enhancer(r, waves)
        report.rows.append(score(est, waves["mixture"], waves["clean"], r, seg_frame))
    return report
