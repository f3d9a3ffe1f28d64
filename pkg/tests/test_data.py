import os
from pathlib import Path

import numpy as np
import pytest

from fedgta import cli
from fedgta.data import (
    DatasetError,
    SbmSpec,
    config_to_ini,
    convert_planetoid,
    generate_sbm,
    load_assignment,
    load_dataset,
    parse_config,
    save_assignment,
    save_dataset,
)
from fedgta.federation import FederationConfig
from fedgta.graph import validate
from fedgta.partition import louvain_split


def test_sbm_extremes():
    g = generate_sbm(SbmSpec(blocks=2, nodes_per_block=5, p_in=1.0, p_out=0.0, feature_dim=2, seed=0))
    assert g.num_edges == 2 * 10
    assert all(set((g.neighbors(u) >= 5).tolist()) == {u >= 5} for u in range(10))
    g = generate_sbm(SbmSpec(blocks=3, nodes_per_block=10, feature_noise=0.0, feature_dim=4))
    for b in range(3):
        block = g.features[g.labels == b]
        assert np.all(block == block[0])


def test_sbm_density_concentrates():
    g = generate_sbm(SbmSpec(blocks=4, nodes_per_block=50, p_in=0.2, p_out=0.01, seed=3))
    e = g.edge_list()
    intra = np.count_nonzero(g.labels[e[:, 0]] == g.labels[e[:, 1]])
    pairs = 4 * 50 * 49 / 2
    sigma = np.sqrt(pairs * 0.2 * 0.8)
    assert abs(intra - 0.2 * pairs) <= 3 * sigma


def test_sbm_deterministic_and_stratified():
    a = generate_sbm(SbmSpec(seed=9))
    b = generate_sbm(SbmSpec(seed=9))
    assert np.array_equal(a.col_indices, b.col_indices) and np.array_equal(a.features, b.features)
    assert np.array_equal(a.train_mask, b.train_mask)
    for cls in range(4):
        members = a.labels == cls
        assert a.train_mask[members].sum() == 30 and a.val_mask[members].sum() == 60


def test_sbm_validation():
    with pytest.raises(ValueError):
        SbmSpec(p_in=0.1, p_out=0.2)
    with pytest.raises(ValueError):
        SbmSpec(blocks=5, feature_dim=3)


def test_dataset_round_trip(tmp_path):
    g = generate_sbm(SbmSpec(blocks=2, nodes_per_block=20, p_in=0.3, p_out=0.05, seed=1))
    save_dataset(g, tmp_path)
    back = load_dataset(tmp_path)
    validate(back)
    for name in ("row_offsets", "col_indices", "features", "labels", "train_mask", "val_mask", "test_mask"):
        assert np.array_equal(getattr(back, name), getattr(g, name)), name


def test_out_of_range_edge_names_line(tmp_path):
    g = generate_sbm(SbmSpec(blocks=2, nodes_per_block=5, p_in=0.5, p_out=0.1, feature_dim=2, seed=0))
    save_dataset(g, tmp_path)
    lines = (tmp_path / "edges.txt").read_text().splitlines()
    lines.insert(3, "0 999")
    (tmp_path / "edges.txt").write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetError, match=r"edges\.txt:4"):
        load_dataset(tmp_path)
    (tmp_path / "edges.txt").write_text("0 x\n")
    with pytest.raises(DatasetError, match=r"edges\.txt:1"):
        load_dataset(tmp_path)


def test_missing_file_and_bad_masks(tmp_path):
    g = generate_sbm(SbmSpec(blocks=2, nodes_per_block=5, feature_dim=2))
    save_dataset(g, tmp_path)
    (tmp_path / "masks.csv").write_text("2,0,0\n" * g.num_nodes)
    with pytest.raises(DatasetError, match="0 or 1"):
        load_dataset(tmp_path)
    (tmp_path / "masks.csv").unlink()
    with pytest.raises(DatasetError, match="masks.csv"):
        load_dataset(tmp_path)


def write(tmp_path, text, name="c.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_config_defaults_and_overrides(tmp_path):
    assert parse_config(write(tmp_path, "")) == FederationConfig()
    cfg = parse_config(write(tmp_path, "[federation]\nepsilon = 0.7\nK = 10\n[train]\nE = 4\n"))
    assert cfg.epsilon == 0.7 and cfg.moment_order == 10 and cfg.train.local_epochs == 4
    assert (cfg.rounds, cfg.lp_alpha, cfg.lp_steps) == (100, 0.5, 5)


@pytest.mark.parametrize("text, needle", [
    ("[federation]\nK = 0\n", "moment_order"),
    ("[federation]\nrounds = ten\n", "int"),
    ("[federation]\nfoo = 1\n", "unknown key"),
    ("[server]\nx = 1\n", "unknown config section"),
    ("[federation]\nstale_reports = maybe\n", "bool"),
])
def test_config_errors(tmp_path, text, needle):
    with pytest.raises(ValueError, match=needle):
        parse_config(write(tmp_path, text))


def test_config_ini_round_trip(tmp_path):
    cfg = parse_config(write(tmp_path, "[federation]\nstrategy = fedprox\n[train]\nprox_mu = 0.05\n"))
    assert parse_config(write(tmp_path, config_to_ini(cfg), "back.ini")) == cfg


def test_cli_pipeline(tmp_path, capsys):
    data = tmp_path / "sbm"
    assert cli.main(["gen-sbm", "--out", str(data), "--blocks", "3", "--nodes-per-block", "40",
                     "--p-in", "0.1", "--p-out", "0.005", "--seed", "2"]) == 0
    assert cli.main(["partition", "--data", str(data), "--clients", "4", "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "label_distribution.csv").is_file()
    run = tmp_path / "run"
    assert cli.main(["run", "--data", str(data), "--assignment", str(tmp_path / "p" / "assignment.csv"),
                     "--rounds", "3", "--epsilon", "0.5", "--out", str(run), "--write-aggregation"]) == 0
    assert parse_config(run / "config.ini").rounds == 3
    last = capsys.readouterr().out.strip().splitlines()[-1]
    acc = float(last.rsplit(" ", 1)[1])
    assert cli.main(["eval", "--data", str(data), "--assignment", str(tmp_path / "p" / "assignment.csv"),
                     "--weights", str(run / "weights")]) == 0
    assert f"{acc:.4f}" in capsys.readouterr().out
    assert cli.main(["partition", "--data", str(data), "--method", "metis", "--clients", "4",
                     "--out", str(tmp_path / "m")]) == 0


def test_cli_reports_errors(tmp_path, capsys):
    assert cli.main(["partition", "--data", str(tmp_path / "missing"), "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_assignment_round_trip(tmp_path):
    g = generate_sbm(SbmSpec(blocks=2, nodes_per_block=30, p_in=0.2, p_out=0.01))
    part = louvain_split(g, 2)
    save_assignment(part, tmp_path / "a.csv")
    assert np.array_equal(load_assignment(g, tmp_path / "a.csv").assignment, part.assignment)


def test_planetoid_conversion(tmp_path):
    (tmp_path / "t.content").write_text(
        "p1 1 0 0 Theory\np2 0 1 0 Neural\np3 0 0 1 Theory\np4 1 1 0 Neural\np5 0 1 1 Rule\n")
    (tmp_path / "t.cites").write_text("p1 p2\np2 p3\np3 p3\np4 p9\np5 p1\n")
    g = convert_planetoid(tmp_path / "t.content", tmp_path / "t.cites", tmp_path / "out")
    assert (g.num_nodes, g.num_classes, g.num_features, g.num_edges) == (5, 3, 3, 3)
    assert g.labels.tolist() == [2, 0, 2, 0, 1]
    assert load_dataset(tmp_path / "out").num_edges == 3


@pytest.mark.skipif(not os.environ.get("CORA_DIR"), reason="set CORA_DIR to a folder with cora.content/cora.cites")
def test_real_cora(tmp_path):
    root = Path(os.environ["CORA_DIR"])
    convert_planetoid(root / "cora.content", root / "cora.cites", tmp_path)
    back = load_dataset(tmp_path)
    assert back.num_nodes == 2708 and back.num_classes == 7


def test_readme_config_example_parses(tmp_path):
    readme = (Path(__file__).resolve().parents[1] / "README.md").read_text()
    block = readme.split("```ini\n", 1)[1].split("```", 1)[0]
    cfg = parse_config(write(tmp_path, block))
    assert cfg == FederationConfig()
