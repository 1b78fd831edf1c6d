import json

import pytest

from app.exceptions import ConfigError, ContractViolation
from app.models.schemas import EvalModel
from app.services.metrics import hpbw
from app.services.scenarios import (
    ScenarioService,
    describe_materials,
    load_scenario,
    parse_scenario,
    referenced_data_files,
)

BUNDLED = ("squint_phased", "squint_lens", "gain_ratio", "sls_example", "fabricated_lens")


def phased_scenario(**overrides):
    raw = {
        "name": "phased_only",
        "antennas": [{"kind": "phased", "label": "phased"}],
        "aods_deg": [6, 12, 18, 24, 30],
        "numerics": {"theta_step_deg": 0.05},
    }
    raw.update(overrides)
    return raw


def small_lens_scenario(**overrides):
    raw = {
        "name": "small_lens",
        "antennas": [{
            "kind": "lens",
            "label": "lens",
            "lens": {"diameter_lambda": 10, "material": "teflon_a"},
        }],
        "aods_deg": [6, 12],
        "numerics": {"theta_step_deg": 0.05, "ray_count": 401},
    }
    raw.update(overrides)
    return raw


def diagnostics_of(raw):
    with pytest.raises(ConfigError) as excinfo:
        parse_scenario(raw)
    assert excinfo.value.exit_code == 2
    return excinfo.value.diagnostics


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scenarios_load(name):
    loaded = load_scenario(name)
    assert loaded.scenario.name == name
    assert loaded.path.name == f"{name}.json"


def test_invalid_field_is_reported_with_pointer():
    raw = phased_scenario(antennas=[{"kind": "phased", "array": {"n_elements": 0}}])
    diagnostics = diagnostics_of(raw)
    assert any(d.startswith("/antennas/0/array/n_elements") for d in diagnostics)


def test_unknown_key_is_rejected():
    diagnostics = diagnostics_of(phased_scenario(bogus=1))
    assert any(d.startswith("/bogus") for d in diagnostics)


def test_duplicate_labels_are_rejected():
    raw = phased_scenario(antennas=[{"kind": "phased"}, {"kind": "phased"}])
    assert any(d.startswith("/antennas") for d in diagnostics_of(raw))


def test_unknown_material_is_reported():
    raw = small_lens_scenario()
    raw["antennas"][0]["lens"]["material"] = "unobtainium"
    diagnostics = diagnostics_of(raw)
    assert diagnostics[0].startswith("/antennas/0/lens/material")


def test_material_band_must_cover_antenna_band(tmp_path):
    (tmp_path / "narrow.json").write_text(json.dumps({
        "name": "narrow", "kind": "constant", "band_ghz": [27.0, 29.0], "eps_r": 2.1, "tan_delta": 0.0,
    }), encoding="utf-8")
    raw = small_lens_scenario()
    raw["antennas"][0]["lens"]["material"] = "narrow.json"
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(raw), encoding="utf-8")
    with pytest.raises(ConfigError) as excinfo:
        load_scenario(path)
    assert any("ne couvre pas" in d for d in excinfo.value.diagnostics)


def test_invalid_json_file(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_scenario(path)
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "missing.json")


def test_band_override_applies_to_every_antenna():
    loaded = load_scenario("sls_example")
    for antenna in loaded.scenario.antennas:
        assert len(antenna.array.band_ghz) == 13


def test_squint_table_outputs(tmp_path):
    loaded = parse_scenario(phased_scenario())
    outcome = ScenarioService().run_squint_table(loaded, tmp_path)

    report = outcome.tables["squint_report"]
    assert len(report) == 60
    assert report.groupby("eval_model").size().to_dict() == {"EM1": 30, "EM2": 30}
    assert outcome.tables["phased_EM2_ad"].shape == (5, 7)
    for name in ("phased_EM1_ad.csv", "phased_EM1_pd.csv", "squint_report.csv",
                 "causative_factors.csv", "squint_report.json", "manifest.json"):
        assert (tmp_path / name).is_file()

    worst = {w["eval_model"]: w for w in outcome.summary["worst"]}
    assert worst["EM2"]["max_abs_ad_deg"] == pytest.approx(1.854, abs=0.02)
    assert worst["EM2"]["max_abs_pd_db"] < 0.05


def test_runs_are_byte_identical(tmp_path):
    loaded = parse_scenario(phased_scenario(
        aods_deg=[30], outputs={"formats": ["csv", "json", "svg"]},
    ))
    first, second = tmp_path / "a", tmp_path / "b"
    ScenarioService().run_gain_ratio(loaded, first)
    ScenarioService(threads=2).run_gain_ratio(loaded, second)
    names = sorted(p.name for p in first.iterdir())
    assert "gain_ratio.svg" in names
    assert names == sorted(p.name for p in second.iterdir())
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_manifest_lists_outputs_and_data(tmp_path):
    loaded = parse_scenario(small_lens_scenario())
    outcome = ScenarioService().run_squint_table(loaded, tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert set(manifest["outputs"]) == {p.name for p in outcome.files} - {"manifest.json"}
    assert "materials/teflon_a.json" in manifest["data"]
    assert manifest["config"] is None
    assert [p.name for p in referenced_data_files(loaded)] == ["teflon_a.json"]

    report = outcome.tables["squint_report"]
    em2 = report[report["eval_model"] == "EM2"]
    assert em2["ad_deg"].abs().max() < 0.35


def test_sls_orders_antennas(tmp_path):
    raw = phased_scenario(
        antennas=[{"kind": "phased", "label": "phased"}, {"kind": "ttd", "label": "ttd"}],
        band_ghz=[27.0, 28.0, 29.0, 30.0],
        sls={"map": "rectangle_room", "beam_count": 4, "step_m": 1.0},
        outputs={"formats": ["csv"]},
    )
    outcome = ScenarioService().run_sls(parse_scenario(raw), tmp_path)
    summary = outcome.tables["sls_summary"].set_index(["antenna", "eval_model"])["median_degradation_db"]

    assert summary[("phased", "EM1")] > summary[("phased", "EM2")]
    assert summary[("phased", "EM2")] > summary[("ttd", "EM2")]
    assert outcome.tables["sls_ttd_EM2"]["degradation_db"].abs().max() < 0.01
    assert (tmp_path / "sls_summary.json").is_file()
    assert (tmp_path / "sls_phased_EM1.csv").is_file()
    assert not (tmp_path / "sls_cdf.svg").exists()

    payload = json.loads((tmp_path / "sls_summary.json").read_text(encoding="utf-8"))
    assert len(payload["cdf_quantiles"]) == 101
    assert set(payload["cdf_samples"]) == {"phased/EM1", "phased/EM2", "ttd/EM1", "ttd/EM2"}


def test_sls_requires_section(tmp_path):
    with pytest.raises(ConfigError):
        ScenarioService().run_sls(parse_scenario(phased_scenario()), tmp_path)


def test_link_report(tmp_path):
    raw = phased_scenario(
        aods_deg=[9.26],
        link={"aod_deg": 9.26, "distance_m": 3.0},
        eval_models=["EM1"],
    )
    outcome = ScenarioService().run_link(parse_scenario(raw), tmp_path)
    frame = outcome.tables["link_report"].set_index("freq_ghz")
    assert frame.loc[28.5, "power_ratio_pct"] == pytest.approx(100.0)
    assert frame.loc[27.0, "power_ratio_pct"] < 100.0
    assert [r["freq_ghz"] for r in outcome.summary["reported"]] == [27.5, 29.5]


def test_dump_pattern(tmp_path):
    loaded = parse_scenario(phased_scenario(outputs={"formats": ["json"]}))
    service = ScenarioService()
    outcome = service.dump_pattern(loaded, "phased", EvalModel.EM1, 12.0, tmp_path)
    assert (tmp_path / "phased" / "phase_12deg_EM1.csv").is_file()
    assert list(outcome.tables["pattern"].columns)[0] == "theta_deg"
    with pytest.raises(ContractViolation):
        service.dump_pattern(loaded, "missing", EvalModel.EM1, 12.0, tmp_path)


def test_dump_pattern_keeps_broadside_target(tmp_path):
    raw = small_lens_scenario(outputs={"formats": ["csv"]})
    raw["antennas"][0]["lens"]["target_aod_deg"] = 0.0
    outcome = ScenarioService().dump_pattern(parse_scenario(raw), None, EvalModel.EM2, None, tmp_path)
    assert outcome.summary["aod_deg"] == 0.0
    assert (tmp_path / "lens" / "lens-feed_0deg_EM2.csv").is_file()


def test_bundled_sls_example_ordering(tmp_path):
    outcome = ScenarioService().run_sls(load_scenario("sls_example"), tmp_path)
    summary = outcome.tables["sls_summary"].set_index(["antenna", "eval_model"])
    degradation = summary["median_degradation_db"]

    assert degradation[("phased", "EM1")] > degradation[("phased", "EM2")]
    assert degradation[("phased", "EM2")] > degradation[("lens", "EM1")]
    assert degradation[("lens", "EM1")] >= degradation[("lens", "EM2")]
    assert 0.5 <= degradation[("phased", "EM1")] <= 1.7
    assert degradation[("lens", "EM1")] <= 0.3
    assert summary.loc[("ttd", "EM2"), "max_degradation_db"] < 0.01
    for em in ("EM1", "EM2"):
        assert summary.loc[("lens", em), "median_se_squint"] > summary.loc[("phased", em), "median_se_squint"]


def test_bundled_fabricated_lens(tmp_path):
    loaded = load_scenario("fabricated_lens")
    service = ScenarioService()
    antenna = loaded.scenario.antennas[0]
    pattern = service.patterns(loaded, antenna, EvalModel.EM1, [9.26])[0]
    assert 12.0 <= hpbw(pattern, 28.5) <= 18.0

    outcome = service.run_link(loaded, tmp_path)
    reported = outcome.summary["reported"]
    assert sorted(r["freq_ghz"] for r in reported if r["eval_model"] == "EM1") == [27.5, 29.5]
    for row in reported:
        assert row["power_ratio_pct"] >= 85.0


def test_describe_materials():
    listing = describe_materials()
    names = [entry["material"]["name"] for entry in listing]
    assert len(listing) >= 6
    assert {"teflon_a", "polycarbonate", "ideal_constant"} <= set(names)
    teflon = listing[names.index("teflon_a")]
    assert teflon["spread_pct"] < 2.0
