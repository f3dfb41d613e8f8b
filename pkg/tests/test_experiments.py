import json
from pathlib import Path

import numpy as np
import pytest

from splitgnn import cli
from splitgnn import experiments as E
from splitgnn.errors import ConfigError
from splitgnn.transcript import RoundTranscript

TOY = Path(__file__).parent / "fixtures" / "toy_dataset"


def small_synthetic_payload(**overrides):
    payload = {
        "node_counts": {"a": 60, "b": 40},
        "relations": [
            {"name": "aa", "src_type": "a", "dst_type": "a", "edge_dim": 2,
             "avg_degree": 3.0, "symmetric": True},
            {"name": "ab", "src_type": "a", "dst_type": "b", "edge_dim": 1,
             "avg_degree": 2.0, "symmetric": False},
            {"name": "ba", "src_type": "b", "dst_type": "a", "edge_dim": 1,
             "avg_degree": 2.0, "symmetric": False},
        ],
        "feature_dim": 8,
        "num_classes": 2,
        "homophily": 0.85,
    }
    payload.update(overrides)
    return payload


def small_config(**overrides):
    base = dict(
        synthetic=small_synthetic_payload(),
        data_seed=3,
        participants=2,
        ratio=[5.0, 5.0],
        model="gcn",
        strategy="split_c",
        seeds=[0],
        batch_size=16,
        epochs=2,
        learning_rate=0.1,
        hidden=8,
        layers=2,
        heads=1,
        server_dropout=0.0,
    )
    base.update(overrides)
    return E.ExperimentConfig.from_json(base)


class TestConfig:
    def test_ratio_length_checked(self):
        with pytest.raises(ConfigError):
            small_config(participants=3)

    def test_unknown_strategy(self):
        with pytest.raises(ConfigError):
            small_config(strategy="split_q")

    def test_json_roundtrip(self):
        cfg = small_config()
        back = E.ExperimentConfig.from_json(cfg.to_json())
        assert back == cfg

    def test_digest_differs_only_in_seed(self):
        cfg = small_config(seeds=[0, 1])
        assert cfg.digest(0) != cfg.digest(1)
        assert cfg.digest(0) == small_config(seeds=[0, 1]).digest(0)


class TestCostModel:
    def test_fl_base_case(self):
        assert E.comm_cost_fl(1, 1, 1) == 16

    def test_fl_linear_in_participants(self):
        assert E.comm_cost_fl(8, 1000, 3) == 2 * E.comm_cost_fl(4, 1000, 3)

    def test_fl_large_case(self):
        assert E.comm_cost_fl(8, 10**6, 5) == 640_000_000

    def test_fl_rejects_nonpositive(self):
        with pytest.raises(ConfigError):
            E.comm_cost_fl(0, 10, 1)

    def test_sl_sums_transcripts(self):
        t1, t2 = RoundTranscript(), RoundTranscript()
        t1.add(0, "party_0", "server", "embedding", 4, 32)
        t2.add(0, "party_1", "server", "gradient", 4, 32)
        t2.add(1, "server", "party_1", "gradient", 2, 16)
        assert E.comm_cost_sl([t1, t2]) == 80
        assert E.comm_cost_sl(t1) == 32


class TestRunExperiment:
    def test_entire_beats_majority_class(self):
        cfg = small_config(strategy="entire", epochs=5, learning_rate=0.2)
        rows, _, _ = E.run_experiment(cfg)
        bundle = E._load_bundle(cfg)
        labels = bundle.graph.labels[bundle.test_ids]
        majority = np.max(np.bincount(labels)) / len(labels)
        assert rows[-1].test_f1 > majority

    def test_split_one_participant_matches_entire(self):
        common = dict(participants=1, ratio=[1.0], epochs=2, seeds=[0])
        split_rows, _, _ = E.run_experiment(small_config(strategy="split_c", **common))
        entire_rows, _, _ = E.run_experiment(small_config(strategy="entire", **common))
        for s, e in zip(split_rows, entire_rows):
            assert s.train_loss == pytest.approx(e.train_loss, abs=1e-9)
            assert s.test_f1 == pytest.approx(e.test_f1, abs=1e-12)

    def test_two_seeds_two_groups(self):
        rows, _, _ = E.run_experiment(small_config(seeds=[0, 1]))
        digests = {r.digest for r in rows}
        assert len(digests) == 2
        by_seed = {r.seed for r in rows}
        assert by_seed == {0, 1}

    def test_standalone_non_holder_gets_granted_labels(self):
        rows, _, _ = E.run_experiment(small_config(strategy="standalone_1"))
        assert all(r.label_access == "granted" for r in rows)
        rows0, _, _ = E.run_experiment(small_config(strategy="standalone_0"))
        assert all(r.label_access == "native" for r in rows0)

    def test_cost_report_measures_transcript(self):
        cfg = small_config(strategy="split_m", epochs=1)
        rows, cost, transcript = E.run_experiment(cfg)
        assert cost.sl_bytes == transcript.total_bytes()
        assert cost.rounds > 0
        assert cost.fl_bytes == E.comm_cost_fl(2, cost.model_params, cost.rounds)

    def test_dataset_directory_input(self):
        cfg = small_config()
        payload = {**cfg.to_json(), "dataset": str(TOY), "synthetic": None,
                   "participants": 1, "ratio": [1.0], "strategy": "entire",
                   "batch_size": 1, "epochs": 1, "hidden": 4}
        rows, _, _ = E.run_experiment(E.ExperimentConfig.from_json(payload))
        assert rows


class TestEmitReport:
    def test_single_row_two_lines(self, tmp_path):
        rows, cost, _ = E.run_experiment(small_config(epochs=1))
        mpath, cpath = E.emit_report(rows[:1], cost, tmp_path)
        assert len(mpath.read_text().splitlines()) == 2
        assert len(cpath.read_text().splitlines()) == 2

    def test_rerun_byte_identical(self, tmp_path):
        cfg = small_config(seeds=[0, 1])
        rows1, cost1, _ = E.run_experiment(cfg)
        E.emit_report(rows1, cost1, tmp_path / "a")
        rows2, cost2, _ = E.run_experiment(cfg)
        E.emit_report(rows2, cost2, tmp_path / "b")
        assert (tmp_path / "a" / "metrics.csv").read_bytes() == \
               (tmp_path / "b" / "metrics.csv").read_bytes()
        assert (tmp_path / "a" / "cost.csv").read_bytes() == \
               (tmp_path / "b" / "cost.csv").read_bytes()

    def test_roundtrip_parse_recovers_values(self, tmp_path):
        rows, cost, _ = E.run_experiment(small_config(epochs=1))
        mpath, _ = E.emit_report(rows, cost, tmp_path)
        parsed = E.read_metrics(mpath)
        assert len(parsed) == len(rows)
        for raw, row in zip(parsed, rows):
            assert float(raw["train_loss"]) == row.train_loss
            assert float(raw["test_f1"]) == row.test_f1

    def test_empty_rows_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            E.emit_report([], [], tmp_path)


class TestGrids:
    def test_table1_grid_strategies(self):
        cfgs = E.grid_configs(small_config(), "table1")
        assert [c.strategy for c in cfgs] == [
            "entire", "standalone_0", "standalone_1", "split_m", "split_c", "split_w"]

    def test_table2_grid_participants(self):
        cfgs = E.grid_configs(small_config(), "table2")
        assert [c.participants for c in cfgs] == [2, 4, 8]
        assert all(c.strategy == "split_c" for c in cfgs)

    def test_table3_grid_ratios(self):
        cfgs = E.grid_configs(small_config(), "table3")
        assert [c.ratio for c in cfgs] == [[5.0, 5.0], [3.0, 7.0], [1.0, 9.0]]

    def test_unknown_grid(self):
        with pytest.raises(ConfigError):
            E.grid_configs(small_config(), "table9")


class TestCli:
    def _write_config(self, tmp_path, **overrides):
        cfg = small_config(**overrides)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg.to_json()))
        return path

    def test_run_writes_reports(self, tmp_path, capsys):
        cfg_path = self._write_config(tmp_path, epochs=1)
        code = cli.main(["run", "--config", str(cfg_path),
                         "--out", str(tmp_path / "out")])
        assert code == 0
        assert (tmp_path / "out" / "metrics.csv").exists()
        assert (tmp_path / "out" / "cost.csv").exists()
        assert (tmp_path / "out" / "transcript.csv").exists()

    def test_run_seed_override(self, tmp_path):
        cfg_path = self._write_config(tmp_path, epochs=1)
        out = tmp_path / "out"
        assert cli.main(["run", "--config", str(cfg_path), "--out", str(out),
                         "--seeds", "5,6"]) == 0
        rows = E.read_metrics(out / "metrics.csv")
        assert {r["seed"] for r in rows} == {"5", "6"}

    def test_missing_config_is_exit_1(self, tmp_path, capsys):
        assert cli.main(["run", "--config", str(tmp_path / "nope.json")]) == 1

    def test_bad_config_value_is_exit_1(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"strategy": "split_q"}))
        assert cli.main(["run", "--config", str(path)]) == 1

    def test_audit_plaintext_run_exit_3(self, tmp_path, capsys):
        cfg_path = self._write_config(tmp_path, epochs=1)
        out = tmp_path / "out"
        cli.main(["run", "--config", str(cfg_path), "--out", str(out)])
        code = cli.main(["audit", "--transcript", str(out / "transcript.csv")])
        assert code == 3
        assert "plaintext_embedding" in capsys.readouterr().out

    def test_audit_secure_run_exit_0(self, tmp_path, capsys):
        cfg_path = self._write_config(tmp_path, epochs=1, strategy="split_m",
                                      batch_size=4, hidden=4, layers=1)
        out = tmp_path / "out"
        assert cli.main(["run", "--config", str(cfg_path), "--out", str(out),
                         "--secure"]) == 0
        assert cli.main(["audit", "--transcript", str(out / "transcript.csv")]) == 0

    def test_gen_synthetic_roundtrip(self, tmp_path):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(small_synthetic_payload()))
        out = tmp_path / "data"
        assert cli.main(["gen-synthetic", "--spec", str(spec_path),
                         "--out", str(out), "--seed", "4"]) == 0
        cfg = small_config()
        payload = {**cfg.to_json(), "dataset": str(out), "synthetic": None,
                   "epochs": 1}
        rows, _, _ = E.run_experiment(E.ExperimentConfig.from_json(payload))
        assert rows

    def test_gen_synthetic_bad_spec_exit_1(self, tmp_path):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps({"node_counts": {"a": 5}}))
        assert cli.main(["gen-synthetic", "--spec", str(spec_path),
                         "--out", str(tmp_path / "d")]) == 1
