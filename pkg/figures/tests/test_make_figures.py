import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from make_figures import REQUIRED_COLUMNS, jain_table_text, load_results, main, make_figures

ARTIFACTS = Path(__file__).resolve().parent.parent.parent / "artifacts"

FIGURE_NAMES = [
    "total_throughput_vs_users",
    "outage_vs_users",
    "outage_vs_hotspot_load",
    "total_throughput_vs_hotspot_load",
]


def synthetic_csv(path, schemes=("MT", "SS-TF", "SS-AF", "PF"), reps=6, seed=3):
    """A small results file with a station sweep and a hotspot sweep."""
    rng = np.random.default_rng(seed)
    rows = []
    for scheme_idx, scheme in enumerate(schemes):
        for users in (8, 16, 32):
            for rep in range(reps):
                rows.append([scheme, users, 0.0625, rep,
                             100 + 10 * scheme_idx + users + rng.normal(0, 3),
                             min(1.0, 0.5 + 0.05 * scheme_idx + rng.normal(0, 0.02)),
                             max(0.0, 0.1 - 0.01 * scheme_idx + rng.normal(0, 0.01))])
        for load in (0.25, 0.5, 1.0):
            for rep in range(reps):
                rows.append([scheme, 32, load, rep,
                             140 + 10 * scheme_idx - 20 * load + rng.normal(0, 3),
                             0.6, min(1.0, 0.1 + 0.2 * load + rng.normal(0, 0.01))])
    pd.DataFrame(rows, columns=REQUIRED_COLUMNS).to_csv(path, index=False)
    return path


def test_full_sweep_produces_all_outputs(tmp_path):
    csv = synthetic_csv(tmp_path / "results.csv")
    outputs = make_figures([csv], tmp_path / "figs")
    for name in FIGURE_NAMES:
        assert outputs[name]["path"].exists()
        assert outputs[name]["series"] == 4
    table = outputs["jain_table"]["path"].read_text()
    for scheme in ("MT", "SS-TF", "SS-AF", "PF"):
        assert scheme in table
    assert "U=8" in table and "U=32" in table


def test_single_scheme_csv(tmp_path):
    csv = synthetic_csv(tmp_path / "results.csv", schemes=("PF",))
    outputs = make_figures([csv], tmp_path / "figs")
    assert all(outputs[name]["series"] == 1 for name in FIGURE_NAMES)


def test_two_seeds_concatenated_widen_bands_no_crash(tmp_path):
    a = synthetic_csv(tmp_path / "a.csv", seed=1)
    b = synthetic_csv(tmp_path / "b.csv", seed=2)
    outputs = make_figures([a, b], tmp_path / "figs")
    assert all(outputs[name]["path"].exists() for name in FIGURE_NAMES)


def test_missing_column_reports_name(tmp_path):
    csv = synthetic_csv(tmp_path / "results.csv")
    df = pd.read_csv(csv).drop(columns=["jain_index"])
    df.to_csv(csv, index=False)
    with pytest.raises(ValueError, match="jain_index"):
        load_results([csv])
    assert main([str(csv), str(tmp_path / "figs")]) == 1


def test_rerun_overwrites(tmp_path):
    csv = synthetic_csv(tmp_path / "results.csv")
    outdir = tmp_path / "figs"
    first = make_figures([csv], outdir)
    second = make_figures([csv], outdir)
    assert first.keys() == second.keys()
    assert all(info["path"].exists() for info in second.values())


def test_jain_table_values_match_means(tmp_path):
    csv = synthetic_csv(tmp_path / "results.csv")
    df = pd.read_csv(csv)
    base = df[df["hotspot_load"] == df["hotspot_load"].min()]
    expect = base[(base["scheme"] == "PF") & (base["num_stas"] == 16)]["jain_index"].mean()
    table = jain_table_text(df)
    pf_line = next(line for line in table.splitlines() if line.startswith("PF"))
    assert f"{expect:.3f}" in pf_line


@pytest.mark.skipif(not (ARTIFACTS / "results_uniform.csv").exists()
                    or not (ARTIFACTS / "results_hotspot.csv").exists(),
                    reason="acceptance campaign CSVs not present; run the main suite first")
def test_a12_acceptance_output(tmp_path):
    """Figures from the real campaign CSVs: counts and ranges match contents."""
    uniform = ARTIFACTS / "results_uniform.csv"
    hotspot = ARTIFACTS / "results_hotspot.csv"
    outputs = make_figures([uniform, hotspot], tmp_path / "figs")
    df = load_results([uniform, hotspot])
    n_schemes = df["scheme"].nunique()
    ok = all(outputs[name]["path"].exists() and outputs[name]["series"] == n_schemes
             for name in FIGURE_NAMES)
    table = outputs["jain_table"]["path"].read_text()
    users = sorted(int(u) for u in
                   df[df["hotspot_load"] == df["hotspot_load"].min()]["num_stas"].unique())
    ok &= all(f"U={u}" in table for u in users)
    print(f"[{'PASS' if ok else 'FAIL'}] A12: 4 figures + Jain table from campaign CSVs, "
          f"{n_schemes} series each, table covers U={users}")
    assert ok
