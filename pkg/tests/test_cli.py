"""CLI pipeline chaining, config parsing, exit codes."""

import numpy as np
import pytest

from depthnav.cli import main
from depthnav.config import load_config
from depthnav.errors import ConfigError

MICRO_INI = """\
[run]
scale = desk
environment = sparse

[dataset]
vae_frames = 12
episodes = 4
max_steps = 20

[train]
vae_epochs = 1
cpn_epochs = 1
e2e_epochs = 1

[planner]
max_cycles = 20

[campaign]
runs = 1
environments = sparse
"""


@pytest.fixture()
def micro(tmp_path):
    ini = tmp_path / "micro.ini"
    ini.write_text(MICRO_INI)
    return ini, tmp_path / "run"


def test_full_pipeline_chain_micro_scale(micro, capsys):
    ini, out = micro
    base = ["--config", str(ini), "--seed", "4", "--out", str(out)]
    assert main(["gen-world", *base]) == 0
    assert main(["render-dataset", *base]) == 0
    assert main(["collect-collisions", *base]) == 0
    assert main(["train-vae", *base]) == 0
    assert main(["train-vae", "--vanilla", *base]) == 0
    assert main(["encode-dataset", *base]) == 0
    assert main(["train-cpn", "--variant", "modular", *base]) == 0
    assert main(["train-cpn", "--variant", "end-to-end", *base]) == 0
    assert main(["eval-recon", *base]) == 0
    assert main(["run-mission", "--arm", "oracle", *base]) == 0
    assert main(["run-campaign", "--arms", "oracle", *base]) == 0
    assert main(["dataset", "info", str(out / "collisions_clean.dset")]) == 0
    assert main(["export-frames", str(out / "vae_frames_noisy.dset"),
                 "--out", str(out / "pgm")]) == 0
    captured = capsys.readouterr()
    assert "kind: cold" in captured.out
    assert (out / "campaign.csv").exists()
    assert (out / "recon_report.csv").exists()
    assert len(list((out / "pgm").glob("*.pgm"))) == 36  # 12 frames x 3 files


def test_import_frames_round_trip(micro):
    ini, out = micro
    base = ["--config", str(ini), "--seed", "4", "--out", str(out)]
    assert main(["render-dataset", *base]) == 0
    assert main(["export-frames", str(out / "vae_frames_noisy.dset"),
                 "--out", str(out / "pgm")]) == 0
    out2 = out.parent / "imported"
    assert main(["import-frames", str(out / "pgm"), "--out", str(out2), "--seed", "0"]) == 0
    from depthnav.data import load_dataset
    imported = load_dataset(out2 / "vae_frames_noisy.dset")
    original = load_dataset(out / "vae_frames_noisy.dset")
    assert len(imported) == len(original)
    assert np.array_equal(imported.valid, original.valid)
    # depth quantized to the 16-bit grid on export
    assert np.abs(imported.x - original.x).max() < 1.0 / 65534 + 1e-7


def test_missing_dataset_gives_machine_readable_error(tmp_path, capsys):
    code = main(["train-vae", "--out", str(tmp_path / "nothing")])
    captured = capsys.readouterr()
    assert code == 2
    assert captured.err.startswith("error: DatasetError:")


def test_unknown_subcommand_exits_nonzero():
    with pytest.raises(SystemExit) as exc:
        main(["definitely-not-a-command"])
    assert exc.value.code == 2


def test_config_rejects_unknown_keys(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[vae]\nlatent_dmi = 32\n")
    with pytest.raises(ConfigError, match="latent_dmi"):
        load_config(bad)


def test_config_missing_file_rejected(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.ini")


def test_config_paper_scale_defaults(tmp_path):
    ini = tmp_path / "p.ini"
    ini.write_text("[run]\nscale = paper\n")
    cfg = load_config(ini)
    assert cfg.camera.height == 270 and cfg.camera.width == 480
    assert cfg.vae.latent_dim == 128
    assert cfg.vae.beta_norm == pytest.approx(128 / 129600)


def test_campaign_report_reproducible_across_processes(micro):
    ini, out = micro
    base = ["--config", str(ini), "--seed", "9"]
    out_a, out_b = str(out) + "_a", str(out) + "_b"
    for target in (out_a, out_b):
        assert main(["run-campaign", "--arms", "oracle", *base, "--out", target]) == 0
    from pathlib import Path
    assert (Path(out_a) / "campaign.csv").read_bytes() == \
        (Path(out_b) / "campaign.csv").read_bytes()
    assert (Path(out_a) / "campaign_outcomes.csv").read_bytes() == \
        (Path(out_b) / "campaign_outcomes.csv").read_bytes()
