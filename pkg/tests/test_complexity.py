import json

import pytest
from hypothesis import given, settings, strategies as st

from mobilestyle import config as configs
from mobilestyle.complexity import compare, count_layer, count_network
from mobilestyle.optimize import fuse_demodulation, runtime_macs
from mobilestyle.weights import init_random


class TestCountLayer:
    def test_dense_3x3(self):
        params, macs = count_layer("dense", 512, 512, 3, 8, 8)
        assert params == 2_359_296 + 512
        assert macs == 150_994_944
        assert count_layer("dense", 512, 512, 3, 8, 8, bias=False)[0] == 2_359_296

    def test_separable_3x3(self):
        dw = count_layer("depthwise", 512, 512, 3, 8, 8)
        pw = count_layer("pointwise", 512, 512, 1, 8, 8, bias=False)
        assert dw[1] + pw[1] == 17_072_128
        ratio = 150_994_944 / (dw[1] + pw[1])
        assert ratio == pytest.approx(8.84, abs=5e-3)

    def test_idwt_is_free(self):
        assert count_layer("idwt", 64, 16, 1, 32, 32) == (0, 0)

    def test_mapping(self):
        total = sum(count_layer("linear", 512, 512)[0] for _ in range(8))
        assert total == 2_101_248

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            count_layer("winograd", 1, 1)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 64), st.integers(1, 64), st.sampled_from([1, 3, 5]), st.integers(1, 16))
    def test_macs_monotone_in_every_extent(self, cin, cout, k, r):
        base = count_layer("dense", cin, cout, k, r, r)[1]
        assert count_layer("dense", cin + 1, cout, k, r, r)[1] > base
        assert count_layer("dense", cin, cout + 1, k, r, r)[1] > base
        assert count_layer("dense", cin, cout, k + 2, r, r)[1] > base
        assert count_layer("dense", cin, cout, k, r + 1, r + 1)[1] > base


class TestNetworkCounts:
    @pytest.mark.parametrize("cfg", [
        configs.tiny_mobile(64),
        configs.tiny_mobile(32, demod_mode="style"),
        configs.tiny_dense(32),
    ], ids=["mobile-trainable", "mobile-style", "dense"])
    def test_params_match_container(self, cfg):
        w = init_random(cfg, seed=0)
        assert count_network(cfg, include_mapping=True).total_params == w.num_scalars

    def test_fused_params_match_container(self):
        fused = fuse_demodulation(init_random(configs.tiny_mobile(64), seed=0))
        assert count_network(fused.config, include_mapping=True).total_params == fused.num_scalars

    @pytest.mark.parametrize("cfg", [
        configs.tiny_mobile(64),
        configs.tiny_mobile(32, demod_mode="style"),
        configs.tiny_dense(32),
    ], ids=["mobile-trainable", "mobile-style", "dense"])
    def test_macs_match_runtime_counter(self, cfg):
        w = init_random(cfg, seed=0)
        assert count_network(cfg, include_mapping=True).total_macs == runtime_macs(w)

    def test_fused_macs_match_runtime_counter(self):
        fused = fuse_demodulation(init_random(configs.tiny_mobile(64), seed=0))
        assert count_network(fused.config, include_mapping=True).total_macs == runtime_macs(fused)

    def test_fused_cheaper(self):
        cfg = configs.tiny_mobile(64)
        assert (count_network(cfg.replace(demod_mode="fused")).total_macs
                < count_network(cfg).total_macs)

    def test_mapping_flag(self):
        cfg = configs.mobile()
        diff = count_network(cfg, include_mapping=True).total_params - count_network(cfg).total_params
        assert diff == 2_101_248

    def test_modulation_flag(self):
        cfg = configs.tiny_mobile(64)
        with_mod = count_network(cfg)
        without = count_network(cfg, count_modulation=False)
        assert without.total_params == with_mod.total_params
        assert without.total_macs < with_mod.total_macs

    def test_larger_resolution_costs_more(self):
        small, big = count_network(configs.mobile(256)), count_network(configs.mobile(512))
        assert big.total_params > small.total_params and big.total_macs > small.total_macs


class TestReports:
    def test_compare_self(self):
        cmp = compare(configs.mobile(), configs.mobile())
        assert cmp.ratio_params == 1.0 and cmp.ratio_macs == 1.0

    def test_table_columns(self):
        text = compare(configs.stylegan2_f(), configs.mobile()).table()
        assert "| Network" in text and "MParams" in text and "GMACs" in text
        assert "ratio" in text

    def test_json_roundtrip(self):
        rep = count_network(configs.tiny_mobile(32))
        data = json.loads(rep.to_json())
        assert data["total_params"] == rep.total_params
        assert sum(l["macs"] for l in data["per_layer"]) == rep.total_macs

    def test_per_layer_table(self):
        text = count_network(configs.tiny_mobile(32)).table(per_layer=True)
        assert "synthesis.b4.conv_main.dw" in text
