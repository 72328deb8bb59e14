import json

import numpy as np
import pytest

from sra import harness
from sra.cli import main
from sra.config import RunConfig, config_from_dict, dump_config, load_config
from sra.corpus import CorpusSpec, generate_corpus, split_corpus
from sra.harness import Experiment, ablation_cells, batch_objective, evaluate, pretrain_teacher, run_distillation
from sra.losses import Projection
from sra.model import init_model, load_model
from sra.optim import Adam
from sra.tensor import Parameter, backward

TINY = {
    "corpus": {"n_sentences": 240},
    "n_valid": 20,
    "n_eval": 30,
    "tokenizers": {"train_sentences": 150},
    "teacher": {"n_layers": 2, "d_model": 16, "n_heads": 2, "d_ff": 32},
    "student": {"d_model": 16, "d_ff": 32},
    "pretrain": {"epochs": 8, "lr": 1e-2},
    "distill": {"epochs": 2, "n_train": 48},
    "seeds": [0, 1],
}

SFT = {"distill.alpha": 1.0, "distill.use_kd": False, "distill.use_cos": False, "distill.use_geo": False}


@pytest.fixture(scope="module")
def cfg():
    return config_from_dict(TINY)


@pytest.fixture(scope="module")
def exp(cfg):
    e = Experiment(cfg)
    e.ensure_teacher()
    return e


def test_config_round_trip(tmp_path, cfg):
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg
    assert cfg.teacher.d_model == 16 and cfg.teacher.max_seq_len == 64  # partial sections keep defaults


def test_config_rejects_unknown_keys():
    with pytest.raises(KeyError):
        config_from_dict({"distill": {"lamda": 3}})
    with pytest.raises(KeyError):
        RunConfig().replace(**{"distill.nope": 1})


def test_replace_leaves_original():
    base = RunConfig()
    new = base.replace(**{"distill.lam": 0.0, "seeds": [7]})
    assert new.distill.lam == 0.0 and new.seeds == [7]
    assert base.distill.lam == 50.0 and base.seeds == [0, 1, 2, 3, 4]


def test_corpus_determinism_and_split():
    spec = CorpusSpec(n_sentences=50, seed=3)
    assert generate_corpus(spec) == generate_corpus(spec)
    assert generate_corpus(CorpusSpec(n_sentences=0)) == []
    items = generate_corpus(spec)
    tr, va, ev = split_corpus(items, 5, 10)
    assert (len(tr), len(va), len(ev)) == (35, 5, 10)
    assert all(it.prompt.endswith(" ") and it.response for it in items)
    with pytest.raises(ValueError):
        split_corpus(items, 25, 25)


def test_adam_minimizes_quadratic():
    x = Parameter(np.array([3.0, -2.0]))
    opt = Adam([([x], 0.1)])
    for _ in range(300):
        opt.step(backward((x * x).sum(), [x]))
    assert np.abs(x.data).max() < 1e-2


def test_adam_cosine_schedule_and_clip():
    x = Parameter(np.array([1.0]))
    opt = Adam([([x], 1.0)], grad_clip=0.5, total_steps=4, schedule="cosine")
    assert opt.lr_scale() == 1.0
    norm = opt.step(backward((x * 10.0).sum(), [x]))
    assert norm == pytest.approx(10.0)
    opt.t = 4
    assert opt.lr_scale() == pytest.approx(0.0)
    with pytest.raises(ValueError):
        Adam([([x], 1.0)], schedule="linear")


def test_teacher_beats_unigram(exp):
    rep = exp.pretrain_report
    assert rep["heldout_ce"] < rep["unigram_entropy"]
    assert rep["epoch_ce"][-1] < rep["epoch_ce"][0]


def test_zero_epochs_is_init(exp):
    model, _ = pretrain_teacher(exp, epochs=0)
    ref = init_model(exp.teacher_config())
    for k, v in ref.state().items():
        assert model[k].data.tobytes() == v.tobytes()


def test_teacher_checkpoint_reproduces_ce(tmp_path, cfg, exp):
    from sra.model import save_model
    from sra.tokenization import encode_with_offsets

    save_model(tmp_path / "t.ckpt", exp.teacher)
    back, _ = load_model(tmp_path / "t.ckpt")
    seqs = [encode_with_offsets(exp.tok_t, it.text) for it in exp.eval]
    assert harness.heldout_ce(back, seqs) == harness.heldout_ce(exp.teacher, seqs)


def test_self_distillation_identities(cfg):
    same = cfg.replace(**{"tokenizers.student.scheme": "A", "tokenizers.student.vocab_size": 64,
                          "student.n_layers": 2, "student.d_model": 16, "student.d_ff": 32})
    e = Experiment(same)
    assert e.tok_t is e.tok_s
    e.ensure_teacher()
    student = e.teacher.copy()
    for p in student.parameters():
        p.requires_grad = True
    W = Projection.identity(16)
    encs = [e.encode(it) for it in e.train[:8]]
    for enc in encs:
        assert all(len(t) == 1 and len(s) == 1 for t, s in enc.alignment.pairs)
    _, vals = batch_objective(e, student, [W], encs, same.distill)
    assert abs(vals["hs_span"]) < 1e-9 and abs(vals["geo"]) < 1e-9 and abs(vals["kd_span"]) < 1e-9
    m = evaluate(student, W, e, e.eval)
    assert abs(m["span_cos"] - 1.0) < 1e-9 and abs(m["span_kl"]) < 1e-9


def test_alpha_one_matches_plain_ce(exp, cfg):
    a = run_distillation(harness._with_config(exp, cfg.replace(**{"distill.alpha": 1.0})), seeds=[0])
    b = run_distillation(harness._with_config(exp, cfg.replace(**SFT)), seeds=[0])
    assert [r["ce"] for r in a["records"]] == [r["ce"] for r in b["records"]]
    assert [r["overall"] for r in a["records"]] == [r["ce"] for r in a["records"]]
    assert b["records"][0]["hs_span"] == 0.0 and a["records"][0]["hs_span"] > 0.0


def test_records_have_required_keys(exp):
    rep = run_distillation(exp, seeds=[1])
    need = {"seed", "epoch", "step", "ce", "hs_span", "geo", "kd_span", "overall", "n_spans"}
    assert all(need <= set(r) for r in rep["records"])
    assert rep["records"][-1]["step"] == len(rep["records"]) - 1


def test_untrained_student_has_higher_kl(exp):
    rep = run_distillation(exp, seeds=[0])
    fresh = init_model(exp.student_config(0))
    proj = harness.make_projections(fresh.config, exp.teacher.config, 1, 0)[0]
    assert evaluate(fresh, proj, exp, exp.eval)["span_kl"] > rep["seeds"]["0"]["metrics"]["span_kl"]


def test_ablation_cells():
    cfg = RunConfig()
    assert len(ablation_cells("weighting", cfg)) == 4
    assert [n for n, _ in ablation_cells("p", cfg)] == ["p=0.0", "p=0.5", "p=1.0"]
    layers = ablation_cells("layers", cfg)
    assert [o["distill.transfer_layers"] for _, o in layers] == [[0], [0, 1, 2]]
    assert len(ablation_cells("loss_components", cfg)) == 5
    with pytest.raises(ValueError):
        ablation_cells("depth", cfg)


def test_multi_layer_transfer_runs(exp, cfg):
    c = cfg.replace(**{"distill.transfer_layers": [0, 1, 2], "distill.epochs": 1, "seeds": [0]})
    rep = harness.run_ablation(c, "p", exp=harness._with_config(exp, c))
    assert set(rep["cells"]) == {"p=0.0", "p=0.5", "p=1.0"}


def test_cli_train_eval_align(tmp_path):
    conf = tmp_path / "c.yaml"
    conf.write_text(dump_config(config_from_dict(TINY).replace(**{"seeds": [0], "distill.epochs": 1})))
    out = tmp_path / "run"
    assert main(["train", "--config", str(conf), "--out", str(out), "--dump-spans"]) == 0
    lines = (out / "metrics.jsonl").read_text().splitlines()
    assert any("spans" in json.loads(l) for l in lines)
    summary = json.loads((out / "summary.json").read_text())
    assert main(["eval", "--student", str(out / "student_seed0.ckpt"), "--teacher", str(out / "teacher.ckpt"),
                 "--config", str(conf)]) == 0
    assert main(["align", "--teacher-tok", str(out / "teacher.tok"), "--student-tok", str(out / "student.tok"),
                 "--text", "abc"]) == 0
    assert summary["mean"]["n_spans"] > 0


def test_cli_align_output(tmp_path, capsys, exp):
    exp.tok_t.save(tmp_path / "t.tok")
    exp.tok_s.save(tmp_path / "s.tok")
    text = exp.eval[0].text
    main(["align", "--teacher-tok", str(tmp_path / "t.tok"), "--student-tok", str(tmp_path / "s.tok"), "--text", text])
    rows = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert rows[0]["chars"][0] == 0 and rows[-1]["chars"][1] == len(text)
    assert all(a["chars"][1] == b["chars"][0] for a, b in zip(rows, rows[1:]))


def test_cli_errors(tmp_path, exp):
    exp.tok_t.save(tmp_path / "t.tok")
    exp.tok_s.save(tmp_path / "s.tok")
    assert main(["align", "--teacher-tok", str(tmp_path / "t.tok"), "--student-tok", str(tmp_path / "s.tok"),
                 "--text", "xyz!"]) != 0
    bad = tmp_path / "bad.yaml"
    bad.write_text("distill:\n  lamda: 1\n")
    assert main(["train", "--config", str(bad)]) != 0
    assert main(["eval", "--student", "nope", "--teacher", "nope", "--config", str(bad)]) != 0
