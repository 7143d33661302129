"""Command-line interface tests, run in-process through main(argv).

Exit-code contract: 0 success, 1 validation/input error, 2 backend
failure after retries, 64 usage error.
"""

import json

import pytest

from artaug.cli import EXIT_BACKEND, EXIT_INVALID, EXIT_OK, EXIT_USAGE, main

from conftest import SMALL_CATEGORIES, build_dataset


@pytest.fixture
def cli_dataset(tmp_path, small_dataset):
    """small_dataset saved to disk the way the CLI consumes it."""
    dataset, image_root = small_dataset
    ann_path = tmp_path / "annotations.json"
    dataset.save(ann_path)
    return dataset, ann_path, image_root


def _detections_for(dataset, score=0.9):
    return [
        {
            "image_id": a.image_id,
            "category_id": a.category_id,
            "bbox": list(a.bbox),
            "score": score,
        }
        for a in dataset.annotations
    ]


# ---------------------------------------------------------------------------
# ingest / stats
# ---------------------------------------------------------------------------


class TestIngest:
    def test_valid_dataset_reports_counts(self, cli_dataset, capsys):
        _, ann_path, image_root = cli_dataset
        code = main(["ingest", "--annotations", str(ann_path), "--images", str(image_root)])
        assert code == EXIT_OK
        assert "ok: 3 images, 5 annotations, 3 categories" in capsys.readouterr().out

    def test_missing_annotation_file_fails(self, tmp_path):
        code = main(
            ["ingest", "--annotations", str(tmp_path / "nope.json"), "--images", str(tmp_path)]
        )
        assert code == EXIT_INVALID

    def test_strict_mode_catches_missing_image(self, cli_dataset):
        dataset, ann_path, image_root = cli_dataset
        (image_root / dataset.images[0].file_name).unlink()
        relaxed = main(["ingest", "--annotations", str(ann_path), "--images", str(image_root)])
        assert relaxed == EXIT_OK
        strict = main(
            ["ingest", "--annotations", str(ann_path), "--images", str(image_root), "--strict"]
        )
        assert strict == EXIT_INVALID


class TestStats:
    def test_table_and_shortfall(self, cli_dataset, capsys):
        _, ann_path, _ = cli_dataset
        code = main(["stats", "--annotations", str(ann_path)])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        # rarest class first: jug has 1 instance -> 335 copies -> 336 total
        lines = out.splitlines()
        assert lines[0].split() == ["category", "count", "copies", "balanced"]
        assert lines[1].split() == ["jug", "1", "335", "336"]
        assert "classes below 1000 after balancing: 3" in out
        assert "jug (id 3): 1 -> 336" in out


# ---------------------------------------------------------------------------
# mask
# ---------------------------------------------------------------------------


class TestMask:
    def test_object_strategy_writes_one_mask_per_annotation(self, cli_dataset, tmp_path, capsys):
        _, ann_path, image_root = cli_dataset
        out = tmp_path / "masks"
        code = main(
            [
                "mask",
                "--annotations", str(ann_path),
                "--images", str(image_root),
                "--strategy", "ent-h",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        written = sorted(p.name for p in out.glob("*.png"))
        assert written == [
            "ENT-H_1_1.png",
            "ENT-H_1_2.png",
            "ENT-H_2_3.png",
            "ENT-H_3_4.png",
            "ENT-H_3_5.png",
        ]
        assert "wrote 5 masks" in capsys.readouterr().out

    def test_context_strategy_writes_one_mask_per_image(self, cli_dataset, tmp_path, capsys):
        _, ann_path, image_root = cli_dataset
        out = tmp_path / "masks"
        code = main(
            [
                "mask",
                "--annotations", str(ann_path),
                "--images", str(image_root),
                "--strategy", "opbg",
                "--seed", "4",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        assert sorted(p.name for p in out.glob("*.png")) == [
            "OPBG_1.png",
            "OPBG_2.png",
            "OPBG_3.png",
        ]
        assert "wrote 3 masks" in capsys.readouterr().out

    def test_edge_strategy_has_no_mask(self, cli_dataset, tmp_path):
        _, ann_path, image_root = cli_dataset
        code = main(
            [
                "mask",
                "--annotations", str(ann_path),
                "--images", str(image_root),
                "--strategy", "edge",
                "--out", str(tmp_path / "masks"),
            ]
        )
        assert code == EXIT_INVALID


# ---------------------------------------------------------------------------
# augment
# ---------------------------------------------------------------------------


def _augment_args(ann_path, image_root, out, *extra):
    return [
        "augment",
        "--annotations", str(ann_path),
        "--images", str(image_root),
        "--strategy", "ent-h",
        "--seed", "3",
        "--out", str(out),
        *extra,
    ]


class TestAugment:
    def test_mock_run_produces_output_tree(self, cli_dataset, tmp_path, capsys):
        _, ann_path, image_root = cli_dataset
        out = tmp_path / "out"
        code = main(_augment_args(ann_path, image_root, out))
        assert code == EXIT_OK
        assert "augmented 3 images (5 annotations)" in capsys.readouterr().out
        assert (out / "annotations.json").is_file()
        assert (out / "report.txt").is_file()
        assert len(list((out / "images").glob("*.png"))) == 3

    def test_two_runs_are_byte_identical(self, cli_dataset, tmp_path):
        _, ann_path, image_root = cli_dataset
        main(_augment_args(ann_path, image_root, tmp_path / "a"))
        main(_augment_args(ann_path, image_root, tmp_path / "b"))
        a = {p.name: p.read_bytes() for p in sorted((tmp_path / "a").rglob("*.png"))}
        b = {p.name: p.read_bytes() for p in sorted((tmp_path / "b").rglob("*.png"))}
        assert a == b
        assert (tmp_path / "a" / "annotations.json").read_bytes() == (
            tmp_path / "b" / "annotations.json"
        ).read_bytes()

    def test_unknown_strategy_is_input_error(self, cli_dataset, tmp_path):
        _, ann_path, image_root = cli_dataset
        args = _augment_args(ann_path, image_root, tmp_path / "out")
        args[args.index("ent-h")] = "vibes"
        assert main(args) == EXIT_INVALID

    def test_unreachable_remote_backend_exits_2(self, cli_dataset, tmp_path):
        _, ann_path, image_root = cli_dataset
        code = main(
            _augment_args(
                ann_path, image_root, tmp_path / "out",
                "--backend", "remote",
                "--remote-url", "http://127.0.0.1:9",
                "--retries", "0",
                "--timeout", "0.5",
            )
        )
        assert code == EXIT_BACKEND

    def test_remote_url_from_environment(self, cli_dataset, tmp_path, monkeypatch):
        _, ann_path, image_root = cli_dataset
        monkeypatch.setenv("ARTAUG_REMOTE_URL", "http://127.0.0.1:9")
        out = tmp_path / "out"
        code = main(
            _augment_args(
                ann_path, image_root, out,
                "--backend", "remote", "--retries", "0", "--timeout", "0.5",
            )
        )
        assert code == EXIT_BACKEND  # proves the env URL was dialed
        doc = json.loads((out / "run_config.json").read_text())
        assert doc["config"]["backend"]["base_url"] == "http://127.0.0.1:9"

    def test_remote_without_url_is_input_error(self, cli_dataset, tmp_path, monkeypatch):
        _, ann_path, image_root = cli_dataset
        monkeypatch.delenv("ARTAUG_REMOTE_URL", raising=False)
        code = main(
            _augment_args(ann_path, image_root, tmp_path / "out", "--backend", "remote")
        )
        assert code == EXIT_INVALID


# ---------------------------------------------------------------------------
# config-file flag injection
# ---------------------------------------------------------------------------


class TestConfigFile:
    def test_flags_override_config_values(self, cli_dataset, tmp_path):
        _, ann_path, image_root = cli_dataset
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"seed": 11, "window": 5}))
        out = tmp_path / "out"
        args = _augment_args(ann_path, image_root, out)
        args[1:1] = ["--config", str(cfg_path)]  # after the subcommand token
        assert main(args) == EXIT_OK
        doc = json.loads((out / "run_config.json").read_text())
        assert doc["config"]["global_seed"] == 3  # explicit flag wins
        assert doc["config"]["entropy_window"] == 5  # config supplied

    def test_config_supplies_required_flags(self, cli_dataset, tmp_path, capsys):
        _, ann_path, image_root = cli_dataset
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(
            json.dumps(
                {
                    "annotations": str(ann_path),
                    "images": str(image_root),
                    "strategy": "sal-l",
                    "seed": 9,
                    "out": str(tmp_path / "out"),
                }
            )
        )
        assert main(["augment", "--config", str(cfg_path)]) == EXIT_OK
        assert "augmented 3 images" in capsys.readouterr().out

    def test_non_object_config_is_input_error(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text("[1, 2]")
        assert main(["ingest", "--config", str(cfg_path)]) == EXIT_INVALID

    def test_missing_config_file_is_input_error(self, tmp_path):
        assert main(["ingest", "--config", str(tmp_path / "nope.json")]) == EXIT_INVALID


# ---------------------------------------------------------------------------
# balance
# ---------------------------------------------------------------------------


class TestBalance:
    def test_abundant_class_needs_no_synthesis(self, tmp_path, capsys):
        # 3001 instances sits past the last tier: zero copies planned
        anns = [(1, (i % 40, i % 30, 8, 8)) for i in range(3001)]
        dataset, image_root = build_dataset(tmp_path, [(64, 48, anns)], [(1, "rose")])
        ann_path = tmp_path / "annotations.json"
        dataset.save(ann_path)
        out = tmp_path / "out"
        code = main(
            [
                "balance",
                "--annotations", str(ann_path),
                "--images", str(image_root),
                "--seed", "1",
                "--out", str(out),
                "--canvas", "64", "64",
            ]
        )
        assert code == EXIT_OK
        assert "synthesized 0 objects on 0 canvases" in capsys.readouterr().out
        assert "rose,3001,0,0" in (out / "plan.csv").read_text()
        assert (out / "shortfall.txt").read_text() == (
            "all classes reach 1000 instances after balancing\n"
        )


# ---------------------------------------------------------------------------
# manifest / evaluate / visualize
# ---------------------------------------------------------------------------


class TestManifest:
    def test_mixed_and_staged_schemes(self, cli_dataset, tmp_path, capsys):
        dataset, ann_path, _ = cli_dataset
        out = tmp_path / "manifest.json"
        code = main(
            [
                "manifest",
                "--real", str(ann_path),
                "--synthetic", str(ann_path),
                "--scheme", "mixed",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        assert "scheme mixed: 1 stage(s), real:synthetic = 50.0 : 50.0" in capsys.readouterr().out
        doc = json.loads(out.read_text())
        assert len(doc["stages"]) == 1

        code = main(
            [
                "manifest",
                "--real", str(ann_path),
                "--synthetic", str(ann_path),
                "--scheme", "aug-then-orig",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert [s["name"] for s in doc["stages"]] == ["synthetic", "real"]


class TestEvaluate:
    def test_perfect_detections_score_one(self, cli_dataset, tmp_path, capsys):
        dataset, ann_path, _ = cli_dataset
        pred = tmp_path / "pred.json"
        pred.write_text(json.dumps(_detections_for(dataset)))
        code = main(["evaluate", "--gt", str(ann_path), "--pred", str(pred)])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "map_50_95 = 1.0000"
        assert "  rose: 1.0000" in out

    def test_malformed_predictions_fail(self, cli_dataset, tmp_path):
        _, ann_path, _ = cli_dataset
        pred = tmp_path / "pred.json"
        pred.write_text('{"not": "a list"}')
        assert main(["evaluate", "--gt", str(ann_path), "--pred", str(pred)]) == EXIT_INVALID


class TestVisualize:
    @pytest.mark.parametrize("what,pattern", [
        ("entropy", "entropy_*.png"),
        ("saliency", "saliency_*.png"),
        ("edges", "edges_*.png"),
    ])
    def test_scalar_renderings(self, cli_dataset, tmp_path, what, pattern):
        _, ann_path, image_root = cli_dataset
        out = tmp_path / "viz"
        code = main(
            [
                "visualize",
                "--annotations", str(ann_path),
                "--images", str(image_root),
                "--what", what,
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        assert len(list(out.glob(pattern))) == 3

    def test_mask_overlays(self, cli_dataset, tmp_path):
        _, ann_path, image_root = cli_dataset
        out = tmp_path / "viz"
        code = main(
            [
                "visualize",
                "--annotations", str(ann_path),
                "--images", str(image_root),
                "--what", "masks",
                "--strategy", "adapt",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        assert len(list(out.glob("masks_ADAPT_*.png"))) == 3


# ---------------------------------------------------------------------------
# usage errors and version
# ---------------------------------------------------------------------------


class TestUsage:
    def test_no_arguments_is_usage_error(self):
        assert main([]) == EXIT_USAGE

    def test_unknown_subcommand_is_usage_error(self):
        assert main(["transmogrify"]) == EXIT_USAGE

    def test_unknown_flag_is_usage_error(self, cli_dataset):
        _, ann_path, image_root = cli_dataset
        assert (
            main(
                [
                    "ingest",
                    "--annotations", str(ann_path),
                    "--images", str(image_root),
                    "--frobnicate",
                ]
            )
            == EXIT_USAGE
        )

    def test_missing_required_flag_is_usage_error(self, cli_dataset, tmp_path):
        _, ann_path, image_root = cli_dataset
        # augment without --seed
        assert (
            main(
                [
                    "augment",
                    "--annotations", str(ann_path),
                    "--images", str(image_root),
                    "--strategy", "ent-h",
                    "--out", str(tmp_path / "out"),
                ]
            )
            == EXIT_USAGE
        )

    def test_dangling_config_flag_is_usage_error(self, cli_dataset):
        _, ann_path, image_root = cli_dataset
        assert (
            main(["ingest", "--annotations", str(ann_path), "--images", str(image_root), "--config"])
            == EXIT_USAGE
        )

    def test_version_exits_zero(self, capsys):
        assert main(["--version"]) == EXIT_OK
        assert capsys.readouterr().out.startswith("artaug ")


def test_category_fixture_matches_cli_expectations():
    # the stats assertions above depend on these names/ids
    assert SMALL_CATEGORIES == [(1, "rose"), (2, "lobster"), (3, "jug")]
