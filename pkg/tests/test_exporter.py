import json
import math

import pandas as pd

from app.models.schemas import OutputFormat
from app.services.exporter import ResultWriter, canonical_json, sha256_file


def test_canonical_json_is_sorted_and_strict():
    text = canonical_json({"b": math.inf, "a": [1.5, math.nan]})
    assert text.endswith("\n")
    assert json.loads(text) == {"a": [1.5, None], "b": None}
    assert text.index('"a"') < text.index('"b"')


def test_writer_respects_formats(tmp_path):
    writer = ResultWriter(tmp_path, [OutputFormat.JSON])
    assert writer.write_frame("table", pd.DataFrame({"x": [1.0]})) is None
    assert writer.write_json("summary", {"x": 1}) == tmp_path / "summary.json"
    assert writer.files == [tmp_path / "summary.json"]


def test_csv_uses_fixed_precision(tmp_path):
    writer = ResultWriter(tmp_path, [OutputFormat.CSV])
    path = writer.write_frame("table", pd.DataFrame({"x": [1.0 / 3.0], "n": [2]}))
    assert path.read_text(encoding="utf-8") == "x,n\n0.333333,2\n"


def test_manifest_hashes_outputs(tmp_path):
    writer = ResultWriter(tmp_path, [OutputFormat.CSV])
    table = writer.write_frame("table", pd.DataFrame({"x": [1.0]}))
    manifest = json.loads(writer.write_manifest(None, []).read_text(encoding="utf-8"))
    assert manifest["outputs"] == {"table.csv": sha256_file(table)}
    assert manifest["code_version"]
    assert writer.files[-1].name == "manifest.json"


def test_nested_names_create_directories(tmp_path):
    writer = ResultWriter(tmp_path, [OutputFormat.CSV])
    table = writer.write_frame("lens/lens-feed_6deg_EM1", pd.DataFrame({"x": [1.0]}))
    assert table == tmp_path / "lens" / "lens-feed_6deg_EM1.csv"
    manifest = json.loads(writer.write_manifest(None, []).read_text(encoding="utf-8"))
    assert manifest["outputs"] == {"lens/lens-feed_6deg_EM1.csv": sha256_file(table)}
