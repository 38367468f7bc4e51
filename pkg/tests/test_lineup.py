import logging
import re

import numpy as np
import pytest

from lmelineup.lineup import LineupError, build_lineup, lineup_metadata, reveal
from lmelineup.panels import PanelData, PointsSeries, panel_qq
from lmelineup.svg import RenderOptions, render_svg


def point_panel(seed, n=15):
    rng = np.random.default_rng(seed)
    return PanelData(kind="dotplot",
                     series=(PointsSeries(rng.uniform(1, 3, n), rng.normal(size=n)),))


def make_lineup(seed=0, m=20):
    nulls = [point_panel(100 + i) for i in range(m - 1)]
    return build_lineup(point_panel(7), nulls, seed=seed, m=m)


class TestBuildLineup:
    def test_fixed_seed_fixed_answer(self):
        a1 = reveal(make_lineup(seed=5), confirm=True)
        a2 = reveal(make_lineup(seed=5), confirm=True)
        assert a1 == a2

    def test_wrong_null_count_rejected(self):
        nulls = [point_panel(i) for i in range(10)]
        with pytest.raises(LineupError, match="19 null panels"):
            build_lineup(point_panel(0), nulls, seed=1, m=20)

    def test_mixed_kinds_rejected(self):
        rng = np.random.default_rng(0)
        qq = panel_qq(rng.normal(size=30))
        nulls = [point_panel(i) for i in range(19)]
        with pytest.raises(LineupError, match="mixed panel kinds"):
            build_lineup(qq, nulls, seed=1, m=20)

    def test_axis_ranges_cover_all_panels(self):
        lu = make_lineup(seed=9)
        for panel in lu.panels:
            pts = panel.series[0]
            assert pts.x.min() >= lu.x_range[0] and pts.x.max() <= lu.x_range[1]
            assert pts.y.min() >= lu.y_range[0] and pts.y.max() <= lu.y_range[1]

    def test_data_panel_at_sealed_position(self):
        lu = make_lineup(seed=11)
        ans = reveal(lu, confirm=True)
        data_pts = point_panel(7).series[0]
        placed = lu.panels[ans - 1].series[0]
        assert np.array_equal(placed.x, data_pts.x)
        assert np.array_equal(placed.y, data_pts.y)

    def test_positions_spread_over_range(self):
        seen = {reveal(make_lineup(seed=s), confirm=True) for s in range(120)}
        assert len(seen) >= 15  # most cells hit even in a short sweep


class TestReveal:
    def test_requires_confirm(self):
        lu = make_lineup(seed=1)
        with pytest.raises(LineupError, match="confirm"):
            reveal(lu)

    def test_idempotent(self):
        lu = make_lineup(seed=2)
        assert reveal(lu, confirm=True) == reveal(lu, confirm=True)

    def test_logged(self, caplog):
        lu = make_lineup(seed=3)
        with caplog.at_level(logging.INFO, logger="lmelineup.reveal"):
            reveal(lu, confirm=True)
        assert any("reveal" in rec.message for rec in caplog.records)

    def test_metadata_carries_no_answer(self):
        lu = make_lineup(seed=4)
        meta = lineup_metadata(lu)
        ans = reveal(lu, confirm=True)
        assert "answer" not in meta
        import json

        doc = json.loads(meta)
        assert set(doc) == {"kind", "m", "seed", "replicate_id"}
        assert doc["m"] == 20


class TestRenderSvg:
    def test_exactly_m_text_nodes(self):
        svg = render_svg(make_lineup(seed=6))
        assert len(re.findall(r"<text", svg)) == 20
        labels = re.findall(r"<text[^>]*>(\d+)</text>", svg)
        assert sorted(int(s) for s in labels) == list(range(1, 21))

    def test_no_text_without_ids(self):
        svg = render_svg(make_lineup(seed=6), RenderOptions(show_ids=False))
        assert "<text" not in svg

    def test_byte_identical_rerender(self):
        lu = make_lineup(seed=7)
        assert render_svg(lu) == render_svg(lu)

    def test_default_grid_is_4x5(self):
        svg = render_svg(make_lineup(seed=8), RenderOptions(panel_px=100, gap_px=0,
                                                            margin_px=0))
        assert 'width="500"' in svg and 'height="400"' in svg

    def test_answer_not_leaked_by_markup_shape(self):
        lu = make_lineup(seed=12)
        svg = render_svg(lu)
        ans = reveal(lu, confirm=True)
        # every panel group must expose the same element tags and attribute
        # names; only numeric content may differ
        bodies = re.findall(r"<g transform=\"translate\([^)]*\)\">(.*?)</g>",
                            svg, flags=re.S)
        assert len(bodies) == 20

        def shape(body):
            tags = re.findall(r"<(\w+)", body)
            attrs = sorted(set(re.findall(r"(\w[\w-]*)=\"", body)))
            return (sorted(set(tags)), attrs)

        shapes = {shape(b) == shape(bodies[0]) for b in bodies}
        assert shapes == {True}
        assert "answer" not in svg

    def test_small_m_grid(self):
        nulls = [point_panel(i) for i in range(5)]
        lu = build_lineup(point_panel(0), nulls, seed=1, m=6)
        svg = render_svg(lu)
        assert len(re.findall(r"<text", svg)) == 6

    def test_grid_too_small_rejected(self):
        with pytest.raises(LineupError, match="cannot hold"):
            render_svg(make_lineup(seed=1), RenderOptions(rows=2, cols=2))
