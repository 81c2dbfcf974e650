import pandas as pd
import pytest

from grail.errors import GrailError
from grail.report import AGGREGATED_NAME, pivot, render_markdown, render_text, report


def _aggregated(rows):
    return pd.DataFrame.from_records(
        [{"goals": g, "fraction": f, "learner": l, "metric": m, "f1_mean": mean, "f1_std": std}
         for g, f, l, m, mean, std in rows]
    )


FRAME = _aggregated([
    (2, 0.3, "bc", "neg_mse", 0.9, 0.05),
    (2, 0.3, "gail", "neg_mse", 0.9, 0.1),
    (2, 0.1, "bc", "neg_mse", 0.6, 0.2),
    (2, 0.1, "gail", "neg_mse", 0.7, 0.1),
    (4, 0.3, "bc", "neg_mse", 0.5, 0.0),
])


def test_pivot_rows_and_columns():
    table = pivot(FRAME)
    assert list(table.index) == [(2, 0.1), (2, 0.3), (4, 0.3)]
    assert list(table["mean"].columns) == ["bc/neg_mse", "gail/neg_mse"]
    assert pd.isna(table.loc[(4, 0.3), ("mean", "gail/neg_mse")])


def test_markdown_bolds_every_best_cell():
    lines = render_markdown(pivot(FRAME)).splitlines()
    assert lines[0] == "| Goals | Obs. | bc/neg_mse | gail/neg_mse |"
    assert lines[2] == "| 2 | 10% | 0.60 ± 0.20 | **0.70 ± 0.10** |"
    assert lines[3] == "| 2 | 30% | **0.90 ± 0.05** | **0.90 ± 0.10** |"
    assert lines[4] == "| 4 | 30% | **0.50 ± 0.00** | - |"


def test_text_has_no_markup():
    text = render_text(pivot(FRAME))
    assert "**" not in text
    assert len(text.splitlines()) == 5
    assert "0.60 ± 0.20" in text


def test_single_learner():
    table = pivot(FRAME[FRAME["learner"] == "bc"])
    assert list(table["mean"].columns) == ["bc/neg_mse"]


def test_missing_columns_and_file(tmp_path):
    with pytest.raises(GrailError) as info:
        pivot(FRAME.drop(columns=["f1_std"]))
    assert "f1_std" in str(info.value)
    with pytest.raises(GrailError):
        report(tmp_path)


def test_report_reads_aggregated_file(tmp_path):
    FRAME.to_csv(tmp_path / AGGREGATED_NAME, index=False)
    rendered = report(tmp_path)
    assert rendered.markdown.startswith("| Goals |")
    assert rendered.text.startswith("goals")
    with pytest.raises(GrailError):
        report(tmp_path, score="accuracy")
