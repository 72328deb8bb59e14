"""Teacher pretraining, span-level distillation runs, evaluation and ablation grids."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .alignment import SpanAlignment, align_tokenized, validate_alignment
from .config import RunConfig
from .corpus import CorpusItem, generate_corpus, split_corpus
from .losses import (
    LossReport,
    Projection,
    ce_loss,
    cosine_gram,
    cosine_losses,
    hs_span_loss,
    kd_span_loss,
    overall_loss,
    project_shared,
    weights_entropy,
)
from .model import Model, ModelConfig, forward, init_model, lm_head, load_model, save_model
from .optim import Adam
from .pooling import (
    DegenerateStats,
    TokenWeights,
    attention_index_for_layer,
    pool_spans,
    span_weights,
    token_weights,
)
from .tokenization import PAD, SharedVocabMap, TokenizedText, encode_with_offsets, shared_vocabulary, train_tokenizer_pair

log = logging.getLogger(__name__)

AXES = ("loss_components", "weighting", "layers", "p")


class InvariantError(RuntimeError):
    """A run violated a property the pipeline guarantees; the CLI exits nonzero."""


class TrainingDiverged(InvariantError):
    pass


@dataclass(frozen=True)
class Encoded:
    item: CorpusItem
    teacher: TokenizedText
    student: TokenizedText
    alignment: SpanAlignment


@dataclass
class TeacherView:
    """Frozen-teacher quantities for one text, keyed by hidden-layer index."""

    hidden: dict[int, np.ndarray]
    weights: dict[int, np.ndarray]


class MetricSink:
    """Append-only JSON-lines stream; every line is flushed as written."""

    def __init__(self, path=None):
        self.records: list[dict] = []
        self._fh = open(path, "a", encoding="utf-8") if path else None

    def write(self, record: dict) -> None:
        self.records.append(record)
        if self._fh:
            self._fh.write(json.dumps(record) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None


def pad_batch(seqs: list[TokenizedText]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-pad to (B, L); returns ids, special mask (padding counts as special), offsets."""
    L = max(len(s) for s in seqs)
    ids = np.full((len(seqs), L), PAD, dtype=np.int64)
    special = np.ones((len(seqs), L), dtype=bool)
    offsets = np.zeros((len(seqs), L), dtype=np.int64)
    for b, s in enumerate(seqs):
        n = len(s)
        ids[b, :n] = s.token_ids
        special[b, :n] = s.special_mask
        offsets[b, :n] = s.end_offsets
    return ids, special, offsets


def ce_targets(seqs: list[TokenizedText], items: list[CorpusItem] | None, mask_prompt: bool):
    """Next-token targets and loss mask: skip special targets, and prompt targets if asked."""
    ids, special, offsets = pad_batch(seqs)
    targets = ids[:, 1:]
    mask = ~special[:, 1:]
    if mask_prompt and items is not None:
        cut = np.array([len(it.prompt) for it in items])[:, None]
        mask &= offsets[:, 1:] > cut
    return ids, targets, mask


def unigram_entropy(seqs: list[TokenizedText]) -> float:
    counts = np.bincount(np.concatenate([s.token_ids[~s.special_mask] for s in seqs]))
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


class Experiment:
    """Everything shared by the runs of one config: corpus, tokenizers, teacher, caches."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        items = generate_corpus(cfg.corpus)
        self.train, self.valid, self.eval = split_corpus(items, cfg.n_valid, cfg.n_eval)
        tcfg = cfg.tokenizers
        tok_corpus = [it.text for it in self.train[: tcfg.train_sentences]]
        self.tok_t, self.tok_s = train_tokenizer_pair(
            tok_corpus, tcfg.teacher.vocab_size, tcfg.student.vocab_size, seed=tcfg.seed,
            teacher_scheme=tcfg.teacher.scheme, student_scheme=tcfg.student.scheme,
        )
        self.shared: SharedVocabMap = shared_vocabulary(self.tok_t, self.tok_s)
        self.teacher: Model | None = None
        self.pretrain_report: dict | None = None
        self._encoded: dict[str, Encoded] = {}
        self._views: dict[str, TeacherView] = {}

    # model configs follow the tokenizers' vocabulary sizes
    def teacher_config(self) -> ModelConfig:
        a = self.cfg.teacher
        return ModelConfig(a.n_layers, a.d_model, a.n_heads, a.d_ff, len(self.tok_t.vocab), a.max_seq_len, a.seed)

    def student_config(self, seed: int) -> ModelConfig:
        a = self.cfg.student
        return ModelConfig(a.n_layers, a.d_model, a.n_heads, a.d_ff, len(self.tok_s.vocab), a.max_seq_len, seed)

    def encode(self, item: CorpusItem) -> Encoded:
        enc = self._encoded.get(item.text)
        if enc is None:
            tt = encode_with_offsets(self.tok_t, item.text)
            ts = encode_with_offsets(self.tok_s, item.text)
            alignment = align_tokenized(tt, ts)
            validate_alignment(alignment, tt, ts)
            enc = Encoded(item, tt, ts, alignment)
            self._encoded[item.text] = enc
        return enc

    def set_teacher(self, model: Model) -> None:
        self.teacher = model.freeze()
        self._views.clear()

    def teacher_view(self, enc: Encoded, layers) -> TeacherView:
        if self.teacher is None:
            raise InvariantError("teacher not pretrained")
        key = enc.item.text
        view = self._views.get(key)
        missing = [l for l in layers if view is None or l not in view.hidden]
        if missing:
            acts = forward(self.teacher, enc.teacher.token_ids, capture=True)
            if view is None:
                view = TeacherView({}, {})
                self._views[key] = view
            for l in missing:
                view.hidden[l] = acts.hidden[l].data
                att = acts.attention[attention_index_for_layer(l)]
                view.weights[l] = token_weights(att, enc.teacher.special_mask).values
        return view

    def ensure_teacher(self, ckpt_path=None) -> Model:
        if self.teacher is None:
            if ckpt_path and Path(ckpt_path).exists():
                model, _ = load_model(ckpt_path)
                if model.config != self.teacher_config():
                    raise InvariantError(f"{ckpt_path}: teacher config {model.config} does not match run config")
                self.set_teacher(model)
            else:
                model, self.pretrain_report = pretrain_teacher(self)
                self.set_teacher(model)
                if ckpt_path:
                    save_model(ckpt_path, model)
        return self.teacher


def _check_finite(name: str, value: float, seed=None, step=None):
    if not math.isfinite(value):
        raise TrainingDiverged(f"{name} became {value} (seed={seed}, step={step})")


def lm_ce(model: Model, encs_student, items, mask_prompt: bool) -> T.Tensor:
    ids, targets, mask = ce_targets(encs_student, items, mask_prompt)
    acts = forward(model, ids, capture=False)
    logits = T.take(acts.logits, slice(0, ids.shape[1] - 1), axis=1)
    return ce_loss(logits, targets, mask)


def pretrain_teacher(exp: Experiment, epochs: int | None = None) -> tuple[Model, dict]:
    """Language-model pretraining of the teacher on the training split (all targets)."""
    pcfg = exp.cfg.pretrain
    epochs = pcfg.epochs if epochs is None else epochs
    model = init_model(exp.teacher_config())
    seqs = [encode_with_offsets(exp.tok_t, it.text) for it in exp.train]
    steps_per_epoch = math.ceil(len(seqs) / pcfg.batch_size)
    opt = Adam([(model.parameters(), pcfg.lr)], grad_clip=pcfg.grad_clip,
               total_steps=epochs * steps_per_epoch, schedule="cosine")
    rng = np.random.default_rng(exp.cfg.teacher.seed)
    step_ce, epoch_ce = [], []
    for epoch in range(epochs):
        order = rng.permutation(len(seqs))
        losses = []
        for s in range(steps_per_epoch):
            batch = [seqs[k] for k in order[s * pcfg.batch_size : (s + 1) * pcfg.batch_size]]
            loss = lm_ce(model, batch, None, mask_prompt=False)
            _check_finite("teacher ce", loss.item(), step=s)
            opt.step(T.backward(loss, model.parameters()))
            losses.append(loss.item())
        step_ce.extend(losses)
        epoch_ce.append(float(np.mean(losses)))
        log.info("teacher epoch %d ce %.4f", epoch, epoch_ce[-1])
    heldout = [encode_with_offsets(exp.tok_t, it.text) for it in exp.eval]
    report = {
        "epoch_ce": epoch_ce,
        "step_ce": step_ce,
        "heldout_ce": heldout_ce(model, heldout),
        "unigram_entropy": unigram_entropy(seqs),
    }
    return model, report


def heldout_ce(model: Model, seqs, items=None, mask_prompt=False, batch: int = 50) -> float:
    frozen = model.copy().freeze()
    total, count = 0.0, 0
    for k in range(0, len(seqs), batch):
        chunk = seqs[k : k + batch]
        sub_items = items[k : k + batch] if items is not None else None
        ids, targets, mask = ce_targets(chunk, sub_items, mask_prompt)
        logits = forward(frozen, ids, capture=False).logits.data[:, :-1]
        z = logits - logits.max(axis=-1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
        nll = -np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
        total += float((nll * mask).sum())
        count += int(mask.sum())
    return total / count


def _layer_pairs(transfer_layers, student_cfg: ModelConfig, teacher_cfg: ModelConfig):
    """Offsets from the top map to (student layer, teacher layer); 0 is the final layer."""
    pairs = []
    for k in transfer_layers:
        if k < 0:
            raise ValueError(f"transfer layer offsets must be >= 0, got {k}")
        pairs.append((max(student_cfg.n_layers - k, 0), max(teacher_cfg.n_layers - k, 0)))
    return pairs


def batch_objective(exp: Experiment, student: Model, projections: list[Projection], encs: list[Encoded],
                    dcfg, stats: DegenerateStats | None = None) -> tuple[T.Tensor, dict]:
    """Combined loss for one batch plus the float values of every component."""
    stats = stats if stats is not None else DegenerateStats()
    teacher = exp.teacher
    layer_pairs = _layer_pairs(dcfg.transfer_layers, student.config, teacher.config)
    if len(projections) != len(layer_pairs):
        raise ValueError("one projection per transferred layer is required")
    items = [e.item for e in encs]
    ids, targets, mask = ce_targets([e.student for e in encs], items, dcfg.mask_prompt)
    _, special, _ = pad_batch([e.student for e in encs])
    acts = forward(student, ids, capture=True)
    logits = T.take(acts.logits, slice(0, ids.shape[1] - 1), axis=1)
    ce = ce_loss(logits, targets, mask)

    distill = dcfg.use_cos or dcfg.use_geo or dcfg.use_kd
    hs_terms, geo_terms, kd_terms, n_spans, entropies, skipped = [], [], [], 0, [], 0
    for b, enc in enumerate(encs):
        if not distill:
            break
        pairs = enc.alignment
        if len(pairs) == 0:
            skipped += 1
            continue
        spans_t, spans_s = pairs.teacher_spans, pairs.student_spans
        view = exp.teacher_view(enc, [lt for _, lt in layer_pairs])
        hs_layers, geo_layers, final = [], [], None
        for (ls, lt), proj in zip(layer_pairs, projections):
            h_s = T.take(acts.hidden[ls], b, axis=0)
            h_t = view.hidden[lt]
            if dcfg.wsp:
                w_s = token_weights(T.take(acts.attention[attention_index_for_layer(ls)], b, axis=0), special[b])
                w_t = TokenWeights(T.Tensor(view.weights[lt]), -1)
            else:
                w_s = w_t = None
            c_s = pool_spans(h_s, w_s, spans_s, dcfg.norm, stats)
            c_t = pool_spans(h_t, w_t, spans_t, dcfg.norm, stats).data
            p = dcfg.p if dcfg.wsl else 0.0
            w_sp = span_weights(view.weights[lt], spans_t, p, stats)
            hs = hs_span_loss(c_s, c_t, proj, w_sp, dcfg.lam, stats, dcfg.use_cos, dcfg.use_geo)
            hs_layers.append(hs.total)
            geo_layers.append(hs.geo)
            if ls == student.config.n_layers and lt == teacher.config.n_layers:
                final = (c_s, c_t)
            if final is None and len(layer_pairs) == 1:
                final = (c_s, c_t)
            entropies.append(weights_entropy(w_sp))
        scale = 1.0 / len(hs_layers)
        hs_terms.append(sum(hs_layers[1:], hs_layers[0]) * scale)
        geo_terms.append(sum(geo_layers[1:], geo_layers[0]) * scale)
        if dcfg.use_kd:
            c_s, c_t = final if final is not None else _final_coms(exp, student, acts, b, enc, special, dcfg, stats)
            zs = project_shared(lm_head(student, c_s), exp.shared, "student")
            zt = project_shared(lm_head(teacher, c_t), exp.shared, "teacher").data
            kd_terms.append(kd_span_loss(zt, zs, dcfg.tau, dcfg.tau_squared))
        n_spans += len(pairs)

    def avg(terms):
        if not terms:
            return T.Tensor(0.0)
        return sum(terms[1:], terms[0]) * (1.0 / len(terms))

    hs_span, geo, kd = avg(hs_terms), avg(geo_terms), avg(kd_terms)
    total = overall_loss(ce, hs_span, kd, dcfg.alpha)
    values = {
        "ce": ce.item(),
        "hs_span": hs_span.item(),
        "geo": geo.item(),
        "kd_span": kd.item(),
        "overall": total.item(),
        "n_spans": n_spans,
        "weights_entropy": float(np.mean(entropies)) if entropies else 0.0,
        "skipped_items": skipped,
    }
    return total, values


def _final_coms(exp, student, acts, b, enc, special, dcfg, stats):
    """Final-layer CoMs when the final layer is not among the transferred ones."""
    L_s, L_t = student.config.n_layers, exp.teacher.config.n_layers
    view = exp.teacher_view(enc, [L_t])
    h_s = T.take(acts.hidden[L_s], b, axis=0)
    if dcfg.wsp:
        w_s = token_weights(T.take(acts.attention[-1], b, axis=0), special[b])
        w_t = TokenWeights(T.Tensor(view.weights[L_t]), -1)
    else:
        w_s = w_t = None
    c_s = pool_spans(h_s, w_s, enc.alignment.student_spans, dcfg.norm, stats)
    c_t = pool_spans(view.hidden[L_t], w_t, enc.alignment.teacher_spans, dcfg.norm, stats).data
    return c_s, c_t


def make_projections(student_cfg: ModelConfig, teacher_cfg: ModelConfig, n: int, seed: int) -> list[Projection]:
    return [Projection(student_cfg.d_model, teacher_cfg.d_model, seed=seed * 7919 + 101 + k, name=f"projector.{k}")
            for k in range(n)]


@dataclass
class SeedResult:
    seed: int
    metrics: dict
    selected_epoch: int
    records: list[dict] = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    student: Model | None = None
    projections: list[Projection] = field(default_factory=list)


def run_seed(exp: Experiment, seed: int, sink: MetricSink | None = None) -> SeedResult:
    """Distil one student; returns held-out metrics for the selected epoch."""
    cfg = exp.cfg
    dcfg = cfg.distill
    if dcfg.select_by not in ("last", "span_kl"):
        raise ValueError(f"select_by must be 'last' or 'span_kl', got {dcfg.select_by!r}")
    exp.ensure_teacher()
    scfg = exp.student_config(seed)
    student = init_model(scfg)
    projections = make_projections(scfg, exp.teacher.config, len(dcfg.transfer_layers), seed)
    train = [exp.encode(it) for it in exp.train[: dcfg.n_train]]
    steps = math.ceil(len(train) / dcfg.batch_size)
    opt = Adam([(student.parameters(), dcfg.lr), ([p.W for p in projections], dcfg.projector_lr)],
               grad_clip=dcfg.grad_clip, total_steps=dcfg.epochs * steps, schedule=dcfg.schedule)
    params = opt.params
    rng = np.random.default_rng(seed)
    stats = DegenerateStats()
    local = MetricSink() if sink is None else sink
    start = len(local.records)
    best = (math.inf, -1, None)
    for epoch in range(dcfg.epochs):
        order = rng.permutation(len(train))
        for s in range(steps):
            batch = [train[k] for k in order[s * dcfg.batch_size : (s + 1) * dcfg.batch_size]]
            loss, values = batch_objective(exp, student, projections, batch, dcfg, stats)
            _check_finite("overall loss", values["overall"], seed, s)
            opt.step(T.backward(loss, params))
            local.write({"seed": seed, "epoch": epoch, "step": epoch * steps + s, **values})
        if dcfg.select_by == "span_kl":
            m = evaluate(student, projections[0], exp, exp.valid)
            if m["span_kl"] < best[0]:
                best = (m["span_kl"], epoch, ([p.data.copy() for p in student.parameters()],
                                              [p.W.data.copy() for p in projections]))
    selected = dcfg.epochs - 1
    if dcfg.select_by == "span_kl" and best[2] is not None:
        selected = best[1]
        for p, arr in zip(student.parameters(), best[2][0]):
            p.data = arr
        for p, arr in zip(projections, best[2][1]):
            p.W.data = arr
    metrics = evaluate(student, projections[0], exp, exp.eval)
    return SeedResult(seed, metrics, selected, local.records[start:], asdict(stats), student, projections)


def evaluate(student: Model, projection: Projection, exp: Experiment, items, batch: int = 50) -> dict:
    """Held-out span metrics under attention-weighted CoM pooling on both sides.

    span_cos: mean over spans of cos(C_s W, C_t); span_kl: mean over spans of
    KL on the shared vocabulary at temperature 1; geo_gap: per-text mean over
    span pairs of (d_s - d_t)^2, averaged over texts; ce: student response CE.
    """
    if not items:
        raise ValueError("empty evaluation set")
    exp.ensure_teacher()
    frozen = student.copy().freeze()
    W = T.Tensor(projection.W.data)
    L_t = exp.teacher.config.n_layers
    cos_all, kl_all, gaps = [], [], []
    encs = [exp.encode(it) for it in items]
    for k in range(0, len(encs), batch):
        chunk = encs[k : k + batch]
        ids, special, _ = pad_batch([e.student for e in chunk])
        acts = forward(frozen, ids, capture=False)
        hidden, att = acts.hidden[-1].data, acts.attention[-1].data
        for b, enc in enumerate(chunk):
            if len(enc.alignment) == 0:
                continue
            view = exp.teacher_view(enc, [L_t])
            w_s = token_weights(att[b], special[b])
            w_t = TokenWeights(T.Tensor(view.weights[L_t]), -1)
            c_s = pool_spans(hidden[b], w_s, enc.alignment.student_spans).data
            c_t = pool_spans(view.hidden[L_t], w_t, enc.alignment.teacher_spans).data
            cos_all.extend((1.0 - cosine_losses(T.Tensor(c_s) @ W, c_t)).data.tolist())
            zs = project_shared(lm_head(frozen, c_s), exp.shared, "student").data
            zt = project_shared(lm_head(exp.teacher, c_t), exp.shared, "teacher").data
            for i in range(len(zs)):
                kl_all.append(kd_span_loss(zt[i : i + 1], zs[i : i + 1], 1.0).item())
            n = len(c_s)
            if n >= 2:
                gs, gt = cosine_gram(c_s).data, cosine_gram(c_t).data
                iu = np.triu_indices(n, k=1)
                gaps.append(float(np.mean((gs[iu] - gt[iu]) ** 2)))
    ce = heldout_ce(frozen, [e.student for e in encs], [e.item for e in encs], exp.cfg.distill.mask_prompt)
    return {
        "span_cos": float(np.mean(cos_all)) if cos_all else 0.0,
        "span_kl": float(np.mean(kl_all)) if kl_all else 0.0,
        "geo_gap": float(np.mean(gaps)) if gaps else 0.0,
        "ce": ce,
        "n_spans": len(cos_all),
    }


def _summary(results: list[SeedResult]) -> dict:
    keys = results[0].metrics.keys() if results else []
    return {k: float(np.mean([r.metrics[k] for r in results])) for k in keys}


def run_distillation(exp_or_cfg, seeds=None, out_dir=None, dump_spans: bool = False) -> dict:
    """Distil across seeds; writes metrics.jsonl and summary.json when ``out_dir`` is set.

    ``dump_spans`` appends one record per held-out text with its span pairs and
    teacher span weights after each seed finishes.
    """
    exp = exp_or_cfg if isinstance(exp_or_cfg, Experiment) else Experiment(exp_or_cfg)
    seeds = list(exp.cfg.seeds if seeds is None else seeds)
    t0 = time.perf_counter()
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        exp.ensure_teacher(out / "teacher.ckpt")
        exp.tok_t.save(out / "teacher.tok")
        exp.tok_s.save(out / "student.tok")
    sink = MetricSink(out / "metrics.jsonl" if out else None)
    results = []
    try:
        for seed in seeds:
            res = run_seed(exp, seed, sink)
            results.append(res)
            if dump_spans:
                for rec in span_dump(exp, seed):
                    sink.write(rec)
            if out:
                save_model(out / f"student_seed{seed}.ckpt", res.student,
                           {p.W.name: p.W.data for p in res.projections})
    finally:
        sink.close()
    report = {
        "config": exp.cfg.to_dict(),
        "seeds": {str(r.seed): {"metrics": r.metrics, "selected_epoch": r.selected_epoch, "degenerate": r.stats}
                  for r in results},
        "mean": _summary(results),
    }
    if out:
        (out / "summary.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        (out / "timing.json").write_text(json.dumps({"wall_clock_s": time.perf_counter() - t0}) + "\n")
    report["records"] = sink.records
    report["results"] = results
    return report


def span_dump(exp: Experiment, seed: int, limit: int = 20) -> list[dict]:
    L_t = exp.teacher.config.n_layers
    out = []
    for item in exp.eval[:limit]:
        enc = exp.encode(item)
        view = exp.teacher_view(enc, [L_t])
        w = span_weights(view.weights[L_t], enc.alignment.teacher_spans, exp.cfg.distill.p)
        out.append({
            "seed": seed,
            "spans": [[t.start, t.end, s.start, s.end] for t, s in enc.alignment.pairs],
            "span_weights": w.tolist(),
            "text": item.text,
        })
    return out


def ablation_cells(axis: str, cfg: RunConfig) -> list[tuple[str, dict]]:
    if axis == "loss_components":
        rows = [("kd", (True, False, False)), ("kd+geo", (True, True, False)), ("kd+cos", (True, False, True)),
                ("geo+cos", (False, True, True)), ("kd+geo+cos", (True, True, True))]
        return [(name, {"distill.use_kd": kd, "distill.use_geo": geo, "distill.use_cos": cos})
                for name, (kd, geo, cos) in rows]
    if axis == "weighting":
        return [(f"wsl={'on' if wsl else 'off'},wsp={'on' if wsp else 'off'}", {"distill.wsl": wsl, "distill.wsp": wsp})
                for wsl, wsp in [(False, False), (False, True), (True, False), (True, True)]]
    if axis == "layers":
        depth = min(cfg.student.n_layers, cfg.teacher.n_layers)
        return [("[L]", {"distill.transfer_layers": [0]}),
                ("[L-2..L]", {"distill.transfer_layers": list(range(min(2, depth) + 1))})]
    if axis == "p":
        return [(f"p={p}", {"distill.p": p}) for p in (0.0, 0.5, 1.0)]
    raise ValueError(f"unknown ablation axis {axis!r}; expected one of {AXES}")


def run_ablation(cfg: RunConfig, axis: str, exp: Experiment | None = None, out_dir=None) -> dict:
    """Grid over one axis; every cell shares corpus, tokenizers, teacher and seeds."""
    cells = ablation_cells(axis, cfg)
    exp = exp or Experiment(cfg)
    exp.ensure_teacher(Path(out_dir) / "teacher.ckpt" if out_dir else None)
    table = {}
    for name, overrides in cells:
        cell_cfg = cfg.replace(**overrides)
        cell_exp = _with_config(exp, cell_cfg)
        sub = Path(out_dir) / name.replace("=", "_").replace(",", "-") if out_dir else None
        if sub:
            sub.mkdir(parents=True, exist_ok=True)
        sink = MetricSink(sub / "metrics.jsonl" if sub else None)
        try:
            results = [run_seed(cell_exp, s, sink) for s in cell_cfg.seeds]
        finally:
            sink.close()
        table[name] = {"overrides": overrides,
                       "per_seed": {str(r.seed): r.metrics for r in results},
                       "mean": _summary(results)}
        log.info("cell %s: %s", name, table[name]["mean"])
    report = {"axis": axis, "cells": table}
    if out_dir:
        Path(out_dir, "ablation.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return report


def _with_config(exp: Experiment, cfg: RunConfig) -> Experiment:
    """View of ``exp`` with different distillation settings, sharing every cache."""
    clone = Experiment.__new__(Experiment)
    clone.__dict__.update(exp.__dict__)
    clone.cfg = cfg
    return clone
