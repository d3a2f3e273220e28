"""End-to-end command tests: flows, exit codes, config files, determinism."""

import json
from datetime import date

import pytest

from attrikit.cli import main
from attrikit.ingest import Category, Profile, Regime, load_profile

RECORDS_HEADER = "date,type,model,status,location,raion,oblast,url\n"

SMALL_PROFILE = (
    "start,end,category,mean_per_day\n"
    "2022-03-01,2022-12-31,tank,3.0\n"
    "2022-03-01,2022-12-31,ifv,2.0\n"
    "2023-01-01,2025-06-30,tank,1.5\n"
    "2023-01-01,2025-06-30,ifv,1.0\n"
)

FAST_MODEL_FLAGS = [
    "--epochs", "60", "--lookback", "6", "--hidden", "6", "--lr", "0.02",
    "--kernel", "2", "--dilations", "1,2", "--channels", "4",
    "--n-trees", "25", "--lags", "1,2,3,6", "--ma-windows", "3",
    "--changepoints", "6", "--yearly-order", "2", "--weekly-order", "0",
]


@pytest.fixture(scope="module")
def records_csv(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    profile = root / "profile.csv"
    profile.write_text(SMALL_PROFILE)
    out = root / "records.csv"
    assert main(["synth", "--seed", "5", "--profile", str(profile), "--out", str(out)]) == 0
    return out


def test_synth_defaults_span_coverage(tmp_path):
    out = tmp_path / "synth.csv"
    assert main(["synth", "--seed", "1", "--out", str(out)]) == 0
    lines = out.read_text().strip().split("\n")
    dates = sorted(line.split(",")[0] for line in lines[1:])
    assert dates[0] >= "2022-02-24" and dates[-1] <= "2025-07-31"


def test_synth_is_byte_identical_per_seed(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["synth", "--seed", "9", "--out", str(a)]) == 0
    assert main(["synth", "--seed", "9", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_synth_zero_mean_regime_writes_no_rows(tmp_path):
    profile = tmp_path / "p.csv"
    profile.write_text("start,end,category,mean_per_day\n2022-03-01,2022-03-20,tank,0\n")
    out = tmp_path / "r.csv"
    assert main(["synth", "--seed", "1", "--profile", str(profile), "--out", str(out)]) == 0
    assert out.read_text().strip().split("\n") == [RECORDS_HEADER.strip()]


def test_synth_bad_profile_exit_2(tmp_path):
    profile = tmp_path / "p.csv"
    profile.write_text("start,end,category,mean_per_day\n2022-03-01,2022-03-20,tank,-4\n")
    assert main(["synth", "--profile", str(profile), "--out", str(tmp_path / "r.csv")]) == 2


def test_ingest_flow(records_csv, tmp_path):
    out = tmp_path / "ingested"
    assert main(["ingest", "--data", str(records_csv), "--out", str(out)]) == 0
    report = json.loads((out / "ingest_report.json").read_text())
    assert report["rows_parsed"] > 0
    assert report["rows_read"] == report["rows_parsed"]  # synth output is clean
    assert (out / "records.csv").read_bytes() == records_csv.read_bytes()


def test_ingest_empty_but_headered_ok(tmp_path):
    data = tmp_path / "empty.csv"
    data.write_text(RECORDS_HEADER)
    assert main(["ingest", "--data", str(data), "--out", str(tmp_path / "o")]) == 0


def test_ingest_missing_date_column_exit_2(tmp_path):
    data = tmp_path / "bad.csv"
    data.write_text("kind,status\ntank,destroyed\n")
    assert main(["ingest", "--data", str(data), "--out", str(tmp_path / "o")]) == 2


def test_ingest_unreadable_input_exit_1(tmp_path):
    assert main(["ingest", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")]) == 1


def test_ingest_geo_index_applied(tmp_path):
    data = tmp_path / "r.csv"
    data.write_text(RECORDS_HEADER + "2022-03-01,tank,,destroyed,Bucha,,,\n")
    geo = tmp_path / "geo.csv"
    geo.write_text('bucha,"Buchanskyi/Kyivska"\n')
    out = tmp_path / "o"
    assert main(["ingest", "--data", str(data), "--geo-index", str(geo), "--out", str(out)]) == 0
    assert "Buchanskyi" in (out / "records.csv").read_text()


def test_aggregate_writes_series(records_csv, tmp_path):
    out = tmp_path / "series.csv"
    code = main(["aggregate", "--data", str(records_csv), "--granularity", "monthly",
                 "--category", "tank", "--out", str(out)])
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "period_start,value,observed"
    assert lines[1].startswith("2022-03-01,")


def test_aggregate_exclusion_masks_rows(records_csv, tmp_path):
    out = tmp_path / "series.csv"
    main(["aggregate", "--data", str(records_csv), "--granularity", "monthly",
          "--exclude", "2023-05-01:2023-06-30", "--out", str(out)])
    rows = {line.split(",")[0]: line.split(",")[2] for line in out.read_text().strip().split("\n")[1:]}
    assert rows["2023-05-01"] == "0" and rows["2023-06-01"] == "0"
    assert rows["2023-04-01"] == "1"


def test_forecast_all_models_and_determinism(records_csv, tmp_path):
    for model in ("arima", "decomp", "lstm", "tcn", "gbt"):
        outs = []
        for run in ("x", "y"):
            out = tmp_path / model / run
            code = main(["forecast", "--data", str(records_csv), "--model", model,
                         "--granularity", "monthly", "--category", "tank",
                         "--exclude", "2025-05-01:2025-06-30", "--horizon", "4",
                         "--seed", "3", "--svg", "--out", str(out), *FAST_MODEL_FLAGS])
            assert code == 0, model
            outs.append((out / f"forecast_{model}.csv").read_bytes()
                        + (out / f"forecast_{model}.svg").read_bytes())
        assert outs[0] == outs[1], f"{model} output not reproducible"


def test_forecast_csv_layout_and_origin(records_csv, tmp_path):
    out = tmp_path / "fc"
    main(["forecast", "--data", str(records_csv), "--model", "arima", "--granularity",
          "monthly", "--exclude", "2025-05-01:2025-06-30", "--horizon", "3",
          "--out", str(out)])
    lines = (out / "forecast_arima.csv").read_text().strip().split("\n")
    assert lines[0] == "period_start,point,lower,upper,level"
    # May-June 2025 excluded at the series tail: the forecast resumes in May.
    assert lines[1].startswith("2025-05-01,")
    assert len(lines) == 4


def test_forecast_zero_horizon_exit_2(records_csv, tmp_path):
    assert main(["forecast", "--data", str(records_csv), "--model", "arima",
                 "--horizon", "0", "--out", str(tmp_path / "o")]) == 2


def test_forecast_model_error_exit_3(tmp_path):
    data = tmp_path / "tiny.csv"
    data.write_text(RECORDS_HEADER + "2022-03-01,tank,,destroyed,,,,\n")
    assert main(["forecast", "--data", str(data), "--model", "arima",
                 "--horizon", "2", "--out", str(tmp_path / "o")]) == 3


def test_backtest_writes_metrics(records_csv, tmp_path):
    out = tmp_path / "bt"
    code = main(["backtest", "--data", str(records_csv), "--model", "gbt",
                 "--granularity", "monthly", "--initial-train", "20", "--step", "2",
                 "--horizon", "2", "--n-trees", "25", "--lags", "1,2,3",
                 "--ma-windows", "3", "--svg", "--out", str(out)])
    assert code == 0
    lines = (out / "backtest_gbt.csv").read_text().strip().split("\n")
    assert lines[0] == "model,mae,rmse,smape,n_points,n_folds"
    payload = json.loads((out / "backtest_gbt.json").read_text())
    assert payload["per_fold"]
    assert (out / "backtest_gbt.svg").exists()


def test_backtest_zero_folds_exit_3(records_csv, tmp_path):
    assert main(["backtest", "--data", str(records_csv), "--model", "gbt",
                 "--granularity", "monthly", "--initial-train", "99",
                 "--out", str(tmp_path / "o")]) == 3


def test_compare_five_models(records_csv, tmp_path):
    out = tmp_path / "cmp"
    code = main(["compare", "--data", str(records_csv), "--granularity", "monthly",
                 "--category", "tank", "--initial-train", "37", "--step", "1",
                 "--horizon", "2", "--seed", "3", "--svg", "--out", str(out),
                 *FAST_MODEL_FLAGS])
    assert code == 0
    lines = (out / "comparison.csv").read_text().strip().split("\n")
    assert lines[0] == "model,mae,rmse,smape,n_points,n_folds"
    assert len(lines) == 6
    assert [ln.split(",")[0] for ln in lines[1:]] == ["arima", "decomp", "gbt", "lstm", "tcn"]
    payload = json.loads((out / "comparison.json").read_text())
    assert set(payload["ranking"]) == {"arima", "decomp", "gbt", "lstm", "tcn"}
    for metric in ("mae", "rmse", "smape"):
        assert (out / f"comparison_{metric}.svg").exists()


def test_compare_determinism(records_csv, tmp_path):
    blobs = []
    for run in ("a", "b"):
        out = tmp_path / run
        code = main(["compare", "--data", str(records_csv), "--granularity", "monthly",
                     "--models", "arima,gbt", "--initial-train", "20", "--horizon", "2",
                     "--seed", "7", "--svg", "--out", str(out), *FAST_MODEL_FLAGS])
        assert code == 0
        blob = b"".join(sorted(p.read_bytes() for p in out.iterdir()))
        blobs.append(blob)
    assert blobs[0] == blobs[1]


def test_config_file_with_flag_override(records_csv, tmp_path):
    config = tmp_path / "run.conf"
    config.write_text(
        f"data={records_csv}\n"
        "granularity=monthly\n"
        "model=arima\n"
        "horizon=2\n"
        "# a comment line\n"
        "exclude=2023-05-01:2023-06-30\n"
    )
    out = tmp_path / "from_config"
    assert main(["forecast", "--config", str(config), "--out", str(out),
                 "--horizon", "5"]) == 0  # flag beats config
    lines = (out / "forecast_arima.csv").read_text().strip().split("\n")
    assert len(lines) == 6


def test_config_unknown_key_exit_2(records_csv, tmp_path):
    config = tmp_path / "bad.conf"
    config.write_text("frobnicate=1\n")
    assert main(["forecast", "--config", str(config), "--data", str(records_csv),
                 "--model", "arima", "--out", str(tmp_path / "o")]) == 2


def test_missing_required_flags_exit_2(tmp_path):
    assert main(["forecast", "--model", "arima", "--out", str(tmp_path / "o")]) == 2
    assert main(["aggregate", "--data", "x.csv"]) == 2


def test_help_available():
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    for command in ("ingest", "synth", "aggregate", "forecast", "backtest", "compare"):
        with pytest.raises(SystemExit) as exc:
            main([command, "--help"])
        assert exc.value.code == 0


def test_backtest_equals_compare_of_one(records_csv, tmp_path, capsys):
    common = ["--data", str(records_csv), "--granularity", "monthly",
              "--initial-train", "20", "--step", "2", "--horizon", "2",
              "--n-trees", "25", "--lags", "1,2,3", "--ma-windows", "3"]
    bt_out, cmp_out = tmp_path / "bt", tmp_path / "cmp"
    assert main(["backtest", "--model", "gbt", "--out", str(bt_out), *common]) == 0
    assert main(["compare", "--models", "gbt", "--out", str(cmp_out), *common]) == 0

    bt_row = (bt_out / "backtest_gbt.csv").read_text().strip().split("\n")[1]
    cmp_row = (cmp_out / "comparison.csv").read_text().strip().split("\n")[1]
    assert bt_row == cmp_row

    printed = capsys.readouterr().out
    n_folds = int(bt_row.split(",")[-1])
    assert f"over {n_folds} folds" in printed
