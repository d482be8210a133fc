import pytest

from spikeae.config import (
    PRESETS,
    SCHEMA,
    build_config,
    config_to_text,
    load_config,
    model_config_from_dict,
    model_config_to_dict,
    parse_pairs,
)
from spikeae.errors import ConfigError


class TestPresets:
    @pytest.mark.parametrize(
        "name,expected",
        [
            ("SAE", dict(l2=0, p1=0, p2=0, a1=0, a1_l3=0)),
            ("SAE-sparse", dict(l2=0, p1=0.005, p2=0.005, a1=0.01, a1_l3=0)),
            ("SAE-dense", dict(l2=0, p1=0, p2=0.01, a1=0, a1_l3=0.1)),
            ("AE", dict(l2=0)),
            ("AE_l2", dict(l2=0.00001)),
            ("VAE", dict(l2=0.01, beta=1.0)),
            ("betaVAE", dict(l2=0.01, beta=0.1)),
        ],
    )
    def test_weights(self, name, expected):
        reg = build_config({"preset": name}).model.reg
        for key, value in expected.items():
            assert getattr(reg, key) == value, key

    def test_families(self):
        assert {n: build_config({"preset": n}).model.family for n in PRESETS} == {
            "SAE": "SAE", "SAE-sparse": "SAE", "SAE-dense": "SAE", "AE": "AE", "AE_l2": "AE",
            "VAE": "VAE", "betaVAE": "VAE",
        }

    def test_explicit_key_beats_preset(self):
        assert build_config({"preset": "SAE-dense", "p2": "0.5"}).model.reg.p2 == 0.5

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            build_config({"preset": "SAE-medium"})


class TestParsing:
    def test_comments_and_blanks(self):
        pairs = parse_pairs(["# header", "", "T = 50  # steps", "n_z=20"])
        assert pairs == {"T": "50", "n_z": "20"}

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="tua"):
            parse_pairs(["tua=0.9"])

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match=":2:"):
            parse_pairs(["T=5", "epochs 3"])

    @pytest.mark.parametrize("pair", [{"T": "many"}, {"tau": "2"}, {"epsilon": "-1"}, {"repetitions": "0"},
                                      {"family": "RBM"}, {"log_timing": "maybe"}, {"channels": "4"}])
    def test_bad_values(self, pair):
        with pytest.raises(ConfigError):
            build_config(pair)

    def test_defaults(self):
        cfg = build_config({})
        m = cfg.model
        assert (m.family, m.n_z, m.coding.T, m.coding.s, m.lif.tau, m.lr, m.batch_size, m.epochs) == (
            "SAE", 100, 100, 0.2, 0.99, 0.0005, 64, 10)
        assert cfg.repetitions == 5 and cfg.run_seeds() == [0, 1, 2, 3, 4]

    def test_seed_list(self):
        assert build_config({"seeds": "3,7"}).run_seeds() == [3, 7]
        assert build_config({"seed": "10", "repetitions": "2"}).run_seeds() == [10, 11]

    def test_file_overrides_and_seed(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("preset=SAE-sparse\nT=20\nseed=4\n")
        cfg = load_config(path, ["T=30"], seed=9)
        assert cfg.model.coding.T == 30 and cfg.model.seed == 9 and cfg.model.reg.a1 == 0.01

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.cfg")


class TestSerialization:
    def test_text_roundtrip(self):
        cfg = build_config({"preset": "SAE-dense", "T": "50", "train_size": "2000", "seeds": "0,1",
                            "channels": "8,16", "log_timing": "true"})
        again = build_config(parse_pairs(config_to_text(cfg).splitlines()))
        assert again == cfg

    def test_text_keys_in_schema(self):
        for line in config_to_text(build_config({})).splitlines():
            assert line.split("=", 1)[0] in SCHEMA

    def test_model_dict_roundtrip(self):
        m = build_config({"preset": "betaVAE", "n_z": "20", "dtype": "float64"}).model
        assert model_config_from_dict(model_config_to_dict(m)) == m

    def test_model_dict_missing_key(self):
        d = model_config_to_dict(build_config({}).model)
        del d["tau"]
        with pytest.raises(ConfigError):
            model_config_from_dict(d)
