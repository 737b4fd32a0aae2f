"""End-to-end command-line pipeline in a temporary workspace."""

import json

import pytest

from outfitgrader.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """synth -> split -> build-dataset, shared by the command tests."""
    root = tmp_path_factory.mktemp("ws")
    corpus = root / "corpus"
    assert main([
        "synth", "--out", str(corpus), "--items-per-part", "24", "--styles", "2",
        "--positives", "40", "--noise", "0.03", "--seed", "11",
    ]) == 0
    assert main([
        "split", "--corpus", str(corpus), "--out", str(root / "split.json"),
    ]) == 0
    assert main([
        "build-dataset", "--corpus", str(corpus), "--split", str(root / "split.json"),
        "--out", str(root / "data"), "--seed", "11",
    ]) == 0
    return root


def train_once(workspace, out_name, seed="3"):
    return main([
        "train", "--corpus", str(workspace / "corpus"), "--data", str(workspace / "data"),
        "--out", str(workspace / out_name), "--iterations", "60", "--batch-size", "16",
        "--lr", "1e-3", "--seed", seed,
    ])


class TestPipeline:
    def test_synth_outputs(self, workspace):
        corpus = workspace / "corpus"
        assert (corpus / "items.ndjson").exists()
        assert (corpus / "outfits.ndjson").exists()
        assert (corpus / "oracle.json").exists()
        assert (corpus / "lexicon.csv").exists()

    def test_split_output_partitions(self, workspace):
        doc = json.loads((workspace / "split.json").read_text())
        n = len((workspace / "corpus" / "outfits.ndjson").read_text().splitlines())
        indices = sorted(doc["train"] + doc["test"] + doc["discarded"])
        assert indices == list(range(n))

    def test_dataset_ratio(self, workspace):
        lines = (workspace / "data" / "train.ndjson").read_text().splitlines()
        labels = [json.loads(l)["label"] for l in lines]
        assert labels.count(False) == 2 * labels.count(True)

    def test_train_writes_checkpoint_and_log(self, workspace):
        assert main([
            "train", "--corpus", str(workspace / "corpus"), "--data", str(workspace / "data"),
            "--out", str(workspace / "model.ckpt"), "--log", str(workspace / "log.csv"),
            "--iterations", "60", "--batch-size", "16", "--lr", "1e-3", "--seed", "3",
        ]) == 0
        assert (workspace / "model.ckpt").read_bytes()[:5] == b"OGRD1"
        header = (workspace / "log.csv").read_text().splitlines()[0]
        assert header == "iteration,loss,train_accuracy"

    def test_train_deterministic_checkpoints(self, workspace):
        assert train_once(workspace, "a.ckpt") == 0
        assert train_once(workspace, "b.ckpt") == 0
        assert (workspace / "a.ckpt").read_bytes() == (workspace / "b.ckpt").read_bytes()

    def test_eval_json_report(self, workspace, capsys):
        train_once(workspace, "model.ckpt")
        capsys.readouterr()  # drop the train command's status line
        assert main([
            "eval", "--corpus", str(workspace / "corpus"), "--data", str(workspace / "data"),
            "--model", str(workspace / "model.ckpt"), "--json",
        ]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert {"accuracy", "per_class", "macro", "counts", "flags"} <= set(doc)

    def test_recommend_ndjson(self, workspace, capsys):
        train_once(workspace, "model.ckpt")
        capsys.readouterr()
        corpus = workspace / "corpus"
        items = (corpus / "items.ndjson").read_text().splitlines()
        pool_path = workspace / "pool.ndjson"
        # a pool drawn from several parts
        wanted = {"upper": 2, "lower": 2, "feet": 1, "accessory": 1}
        lines = []
        for line in items:
            doc = json.loads(line)
            if wanted.get(doc["part"], 0) > 0:
                wanted[doc["part"]] -= 1
                lines.append(line)
        pool_path.write_text("\n".join(lines) + "\n")
        assert main([
            "recommend", "--pool", str(pool_path), "--model", str(workspace / "model.ckpt"),
            "--method", "partial_bs", "--width", "3", "--top", "5", "--seed", "2",
        ]) == 0
        out_lines = capsys.readouterr().out.strip().splitlines()
        assert out_lines
        first = json.loads(out_lines[0])
        assert first["rank"] == 1 and "score" in first and "slots" in first

    def test_ablate_table(self, workspace, capsys):
        assert main([
            "ablate", "--corpus", str(workspace / "corpus"), "--data", str(workspace / "data"),
            "--features", "type,palette", "--iterations", "40", "--batch-size", "16",
            "--json",
        ]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert [r["feature"] for r in doc["rows"]] == ["type_onehot", "palette4"]

    def test_human_sim_handles_small_worlds(self, workspace, capsys):
        train_once(workspace, "model.ckpt")
        capsys.readouterr()
        code = main([
            "human-sim", "--corpus", str(workspace / "corpus"), "--data", str(workspace / "data"),
            "--model", str(workspace / "model.ckpt"), "--annotators", "3",
            "--undecided", "0.0", "--seed", "1", "--json",
        ])
        out = capsys.readouterr()
        # a barely-trained grader may score nothing above the elite threshold;
        # both the report and the explicit error are acceptable here
        if code == 0:
            doc = json.loads(out.out)
            assert "groups" in doc and "group_a_size" in doc
        else:
            assert "0.95" in out.err

    def test_module_errors_exit_nonzero(self, workspace, capsys):
        code = main([
            "eval", "--corpus", str(workspace / "corpus"), "--data", str(workspace / "data"),
            "--model", str(workspace / "missing.ckpt"),
        ])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_feature_spec_fails_cleanly(self, workspace, capsys):
        train_once(workspace, "model.ckpt")
        code = main([
            "eval", "--corpus", str(workspace / "corpus"), "--data", str(workspace / "data"),
            "--model", str(workspace / "model.ckpt"), "--features", "hologram",
        ])
        assert code == 1
