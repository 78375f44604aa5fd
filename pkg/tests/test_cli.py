import hashlib

import pytest

from helpers import make_copy_dataset
from sqlifuzz import dataset as ds
from sqlifuzz.assets import DEMO_CHECKPOINT, DEMO_VOCAB, SAMPLE_SUT
from sqlifuzz.cli import main
from sqlifuzz.tokens import Vocabulary, build_vocab


@pytest.fixture
def small_corpus_dir(tmp_path):
    root = tmp_path / "corpus"
    (root / "attacks").mkdir(parents=True)
    (root / "normals.txt").write_text("7\nadmin\nguest\n")
    (root / "attacks" / "tautology.txt").write_text(
        "' OR 1=1 -- \n' OR 5<7 -- \n' OR 'a'='a\n"
    )
    (root / "attacks" / "piggy_backed.txt").write_text("2;delete from members\n")
    (root / "extensions.txt").write_text(
        "' OR 1=1 -- \t' OR 1=1 UNION SELECT database() -- \tunion_query\n"
    )
    return root


class TestBuildDataset:
    def test_counts_and_outputs(self, small_corpus_dir, tmp_path, capsys):
        out = tmp_path / "pairs.dataset"
        vocab_path = tmp_path / "v.vocab"
        code = main([
            "build-dataset", "--corpus", str(small_corpus_dir),
            "--out", str(out), "--vocab", str(vocab_path),
            "--multiplier", "2.0", "--seed", "1",
        ])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "normal_to_attack: 12 pairs" in stdout
        assert "attack_to_sibling: 6 pairs" in stdout
        assert "attack_to_extended: 1 pairs" in stdout
        assert "enrichment: 19 -> 38 pairs" in stdout
        pairs = ds.load(out)
        assert len(pairs) >= 30
        vocab = Vocabulary.load(vocab_path)
        assert "[normal]" in vocab

    def test_enrichment_arithmetic_on_1000_pairs(self, tmp_path, capsys):
        root = tmp_path / "corpus"
        (root / "attacks").mkdir(parents=True)
        (root / "normals.txt").write_text(
            "".join(f"user{i}\n" for i in range(15))
        )
        (root / "attacks" / "tautology.txt").write_text(
            "".join(f"' OR {i}<{i + 1} -- \n" for i in range(50))
        )
        out = tmp_path / "pairs.dataset"
        code = main([
            "build-dataset", "--corpus", str(root),
            "--out", str(out), "--vocab", str(tmp_path / "v.vocab"),
            "--multiplier", "2.96", "--seed", "0",
        ])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "enrichment: 1000 -> 2960 pairs" in stdout

    def test_bundled_corpus_covers_all_conditions(self, tmp_path, capsys):
        from sqlifuzz.assets import CORPUS_DIR

        code = main([
            "build-dataset", "--corpus", str(CORPUS_DIR),
            "--out", str(tmp_path / "pairs.dataset"),
            "--vocab", str(tmp_path / "v.vocab"),
            "--multiplier", "1.0",
        ])
        assert code == 0
        stdout = capsys.readouterr().out
        for cond in ("normal_to_attack", "attack_to_sibling", "attack_to_extended"):
            line = next(l for l in stdout.splitlines() if l.startswith(cond))
            assert int(line.split(":")[1].split()[0]) > 0

    def test_empty_corpus_exits_2(self, tmp_path, capsys):
        empty = tmp_path / "nothing"
        empty.mkdir()
        code = main([
            "build-dataset", "--corpus", str(empty),
            "--out", str(tmp_path / "x"), "--vocab", str(tmp_path / "y"),
        ])
        assert code == 2


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("data")
    pairs, vocab = make_copy_dataset(24, seed=3)
    dataset_path = tmp / "tiny.dataset"
    vocab_path = tmp / "tiny.vocab"
    ds.save(pairs, dataset_path)
    build_vocab([p.input for p in pairs] + [p.output for p in pairs]).save(vocab_path)
    return dataset_path, vocab_path


class TestTrain:
    def test_train_writes_checkpoint_and_report(self, tiny_dataset, tmp_path, capsys):
        dataset_path, vocab_path = tiny_dataset
        out = tmp_path / "m.ckpt"
        code = main([
            "train", "--dataset", str(dataset_path), "--vocab", str(vocab_path),
            "--out", str(out), "--report-dir", str(tmp_path / "rep"),
            "--grid", "tiny", "--epochs", "2", "--seed", "5",
        ])
        assert code == 0
        assert out.exists()
        assert (tmp_path / "rep" / "training_report.txt").exists()
        assert (tmp_path / "rep" / "training_loss.tsv").exists()
        assert (tmp_path / "rep" / "training_loss.png").exists()
        assert "chosen grid point" in capsys.readouterr().out

    def test_same_seed_same_checkpoint_hash(self, tiny_dataset, tmp_path):
        dataset_path, vocab_path = tiny_dataset
        digests = []
        for name in ("a.ckpt", "b.ckpt"):
            out = tmp_path / name
            code = main([
                "train", "--dataset", str(dataset_path), "--vocab", str(vocab_path),
                "--out", str(out), "--report-dir", str(tmp_path / name[0]),
                "--epochs", "2", "--seed", "9",
            ])
            assert code == 0
            digests.append(hashlib.sha256(out.read_bytes()).hexdigest())
        assert digests[0] == digests[1]

    def test_missing_dataset_exits_2(self, tmp_path):
        code = main([
            "train", "--dataset", str(tmp_path / "missing.dataset"),
            "--vocab", str(tmp_path / "missing.vocab"),
            "--out", str(tmp_path / "m.ckpt"),
        ])
        assert code == 2

    def test_divergence_exits_3(self, tiny_dataset, tmp_path):
        dataset_path, vocab_path = tiny_dataset
        code = main([
            "train", "--dataset", str(dataset_path), "--vocab", str(vocab_path),
            "--out", str(tmp_path / "m.ckpt"), "--report-dir", str(tmp_path),
            "--epochs", "2", "--lr", "1e12", "--seed", "0",
        ])
        assert code == 3


class TestTranslate:
    def test_demo_candidates_are_family_members(self, capsys):
        # candidates for a tautology input are model-dependent strings,
        # but every one must normalize into the tautology family or one
        # of its corpus escalations
        code = main([
            "translate", "' OR 1=1",
            "--checkpoint", str(DEMO_CHECKPOINT), "--vocab", str(DEMO_VOCAB),
            "--beam-width", "5",
        ])
        assert code == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if l]
        assert len(lines) == 5
        from sqlifuzz.mutation import normalize

        family = {
            normalize(s)
            for s in (
                "' OR 1=1",
                "' OR 5<7",
                "' || 5<7",
                "'+OR+1=1",
                "' OR 1=1--",
                "' OR 1=1 -- ",
                "' OR 1=1#",
                "' OR 1=1 UNION SELECT database() -- ",
                "' or 1=1; select group_concat(schema_name) "
                "from information_schema.schemata; --",
            )
        }
        for line in lines:
            _, text = line.split("\t", 1)
            assert normalize(text) in family, text

    def test_prints_scored_candidates(self, capsys):
        code = main([
            "translate", "' OR 1=1",
            "--checkpoint", str(DEMO_CHECKPOINT), "--vocab", str(DEMO_VOCAB),
            "--beam-width", "5",
        ])
        assert code == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if l]
        assert 1 <= len(lines) <= 5
        scores = []
        for line in lines:
            score, text = line.split("\t", 1)
            assert text
            scores.append(float(score))
        assert scores == sorted(scores, reverse=True)

    def test_missing_checkpoint_exits_2(self, tmp_path):
        code = main([
            "translate", "x",
            "--checkpoint", str(tmp_path / "no.ckpt"), "--vocab", str(DEMO_VOCAB),
        ])
        assert code == 2


class TestFuzz:
    def test_small_run_writes_reports(self, tmp_path, capsys):
        sut = tmp_path / "small_sut.txt"
        sut.write_text(
            "sqlifuzz-sut v1\n"
            "\n"
            "[page]\n"
            "path = /c\n"
            'html = <form action="card"><input name="card_type_name" value="visa"></form>\n'
            "\n"
            "[endpoint]\n"
            "id = card\n"
            "template = SELECT card_type_id FROM card_types WHERE card_type_name = '${card_type_name}'\n"
            "param = card_type_name | visa | vulnerable\n"
            "\n"
            "[validation]\n"
            "level = none\n"
        )
        out = tmp_path / "run"
        code = main([
            "fuzz", "--checkpoint", str(DEMO_CHECKPOINT), "--vocab", str(DEMO_VOCAB),
            "--sut", str(sut), "--out", str(out),
            "--max-submissions", "8", "--seed", "2020",
        ])
        assert code == 0
        for name in ("report.txt", "report.tsv", "report_vulns.png",
                     "report_attempts.png"):
            assert (out / name).exists(), name
        stdout = capsys.readouterr().out
        assert "exploitation rate:" in stdout
        tsv = (out / "report.tsv").read_text().splitlines()
        assert tsv[0].split("\t") == [
            "endpoint", "param", "found", "attempts",
            "t_total", "t_success", "er", "seconds",
        ]

    def test_validation_override(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = main([
            "fuzz", "--checkpoint", str(DEMO_CHECKPOINT), "--vocab", str(DEMO_VOCAB),
            "--sut", str(SAMPLE_SUT), "--out", str(out),
            "--max-submissions", "2", "--validation", "none", "--seed", "1",
        ])
        assert code == 0
        assert "validation: none" in capsys.readouterr().out

    def test_invalid_sut_exits_2(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("not a sut\n")
        code = main([
            "fuzz", "--checkpoint", str(DEMO_CHECKPOINT), "--vocab", str(DEMO_VOCAB),
            "--sut", str(bad), "--out", str(tmp_path / "run"),
        ])
        assert code == 2
