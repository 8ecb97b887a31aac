"""End-to-end experiment orchestration: train, translate, evaluate.

An experiment config is a sectioned ``key = value`` file (same grammar as
corpus manifests). The system id fixes the recipe: S1 is the bare
baseline, S2 adds source-side preprocessing, S3 adds transliteration of
OOV words on top; the unconstrained track only concatenates extra
monolingual corpora into the LM training data. Every stage logs to
``run.log`` (timestamp<TAB>stage<TAB>message), aborts with its stage name
on error, and removes partial artifacts.

Given a fixed config, reruns produce byte-identical model files and
reports; the run log carries wall-clock timestamps and is exempt.
"""

import hashlib
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import align, decoder, metrics, morpho, ngram_lm, phrase, translit
from .corpus import (Vocabulary, build_vocabulary, clean_monolingual,
                     load_parallel, read_kv_file, read_lines, write_kv_file,
                     write_lines)
from .errors import ConfigError, SmtError, StageError

log = logging.getLogger(__name__)

SYSTEMS = ("S1", "S2", "S3")
TRACKS = ("constrained", "unconstrained")


@dataclass
class ExperimentConfig:
    pair: str
    system: str
    track: str = "constrained"
    seed: int = 13
    # data
    train_source: str = ""
    train_target: str = ""
    lm_corpus: str = ""
    extra_lm_corpora: tuple = ()
    dev_source: str = ""
    dev_target: str = ""
    test_source: str = ""
    test_target: str = ""
    script_profile: str = "latin"
    assume_tokenized: bool = True
    # preprocessing (applied for S2/S3 only)
    steps: tuple = ()
    suffix_rules: str = ""
    preorder_rules: str = ""
    compound_min_part_len: int = 3
    compound_min_freq: int = 2
    # alignment factor
    align_factor: str = "surface"  # surface | stem
    stemmer_source: str = ""
    stemmer_target: str = ""
    # model parameters
    lm_order: int = 5
    em_iterations: int = 5
    max_phrase_len: int = 7
    beam_size: int = 100
    distortion_limit: int = 6
    nbest_size: int = 100
    tune_rounds: int = 0
    max_train_len: int = 80
    translit_threshold: float = 0.5
    translit_rounds: int = 10
    translit_n: int = 5

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ConfigError(f"system must be one of {SYSTEMS}, got {self.system!r}")
        if self.track not in TRACKS:
            raise ConfigError(f"track must be one of {TRACKS}, got {self.track!r}")
        if self.track == "unconstrained" and not self.extra_lm_corpora:
            raise ConfigError("unconstrained track requires extra_lm_corpora")

    @property
    def effective_steps(self):
        # S1 is the bare baseline regardless of configured steps
        return () if self.system == "S1" else tuple(self.steps)

    @property
    def uses_translit(self):
        return self.system == "S3"

    def to_sections(self):
        base = {
            "pair": self.pair, "system": self.system, "track": self.track,
            "seed": str(self.seed),
        }
        data = {
            "train_source": self.train_source, "train_target": self.train_target,
            "lm_corpus": self.lm_corpus,
            "extra_lm_corpora": ",".join(self.extra_lm_corpora),
            "dev_source": self.dev_source, "dev_target": self.dev_target,
            "test_source": self.test_source, "test_target": self.test_target,
            "script_profile": self.script_profile,
            "assume_tokenized": str(self.assume_tokenized).lower(),
        }
        preprocess = {
            "steps": ",".join(self.steps),
            "suffix_rules": self.suffix_rules,
            "preorder_rules": self.preorder_rules,
            "compound_min_part_len": str(self.compound_min_part_len),
            "compound_min_freq": str(self.compound_min_freq),
        }
        alignment = {
            "factor": self.align_factor,
            "stemmer_source": self.stemmer_source,
            "stemmer_target": self.stemmer_target,
        }
        params = {
            "lm_order": str(self.lm_order),
            "em_iterations": str(self.em_iterations),
            "max_phrase_len": str(self.max_phrase_len),
            "beam_size": str(self.beam_size),
            "distortion_limit": str(self.distortion_limit),
            "nbest_size": str(self.nbest_size),
            "tune_rounds": str(self.tune_rounds),
            "max_train_len": str(self.max_train_len),
            "translit_threshold": str(self.translit_threshold),
            "translit_rounds": str(self.translit_rounds),
            "translit_n": str(self.translit_n),
        }
        return {"": base, "data": data, "preprocess": preprocess,
                "align": alignment, "params": params}

    def config_hash(self):
        digest = hashlib.sha256()
        for section, kv in sorted(self.to_sections().items()):
            for key in sorted(kv):
                digest.update(f"{section}.{key}={kv[key]}\n".encode("utf-8"))
        return digest.hexdigest()


def load_experiment(path):
    sections = read_kv_file(path)
    base = sections.get("", {})
    data = sections.get("data", {})
    pre = sections.get("preprocess", {})
    alignment = sections.get("align", {})
    params = sections.get("params", {})
    root = Path(path).parent

    def resolve(value):
        if not value:
            return ""
        p = Path(value)
        return str(p if p.is_absolute() else root / p)

    missing = [k for k in ("pair", "system") if k not in base]
    if missing:
        raise ConfigError(f"{path}: missing keys {missing}")

    def geti(kv, key, default):
        try:
            return int(kv.get(key, default))
        except ValueError:
            raise ConfigError(f"{path}: non-integer value for {key}") from None

    steps = tuple(s.strip() for s in pre.get("steps", "").split(",") if s.strip())
    extra = tuple(resolve(s.strip())
                  for s in data.get("extra_lm_corpora", "").split(",") if s.strip())
    return ExperimentConfig(
        pair=base["pair"],
        system=base["system"],
        track=base.get("track", "constrained"),
        seed=geti(base, "seed", 13),
        train_source=resolve(data.get("train_source", "")),
        train_target=resolve(data.get("train_target", "")),
        lm_corpus=resolve(data.get("lm_corpus", "")),
        extra_lm_corpora=extra,
        dev_source=resolve(data.get("dev_source", "")),
        dev_target=resolve(data.get("dev_target", "")),
        test_source=resolve(data.get("test_source", "")),
        test_target=resolve(data.get("test_target", "")),
        script_profile=data.get("script_profile", "latin"),
        assume_tokenized=data.get("assume_tokenized", "true").lower() != "false",
        steps=steps,
        suffix_rules=resolve(pre.get("suffix_rules", "")),
        preorder_rules=resolve(pre.get("preorder_rules", "")),
        compound_min_part_len=geti(pre, "compound_min_part_len", 3),
        compound_min_freq=geti(pre, "compound_min_freq", 2),
        align_factor=alignment.get("factor", "surface"),
        stemmer_source=resolve(alignment.get("stemmer_source", "")),
        stemmer_target=resolve(alignment.get("stemmer_target", "")),
        lm_order=geti(params, "lm_order", 5),
        em_iterations=geti(params, "em_iterations", 5),
        max_phrase_len=geti(params, "max_phrase_len", 7),
        beam_size=geti(params, "beam_size", 100),
        distortion_limit=geti(params, "distortion_limit", 6),
        nbest_size=geti(params, "nbest_size", 100),
        tune_rounds=geti(params, "tune_rounds", 0),
        max_train_len=geti(params, "max_train_len", 80),
        translit_threshold=float(params.get("translit_threshold", 0.5)),
        translit_rounds=geti(params, "translit_rounds", 10),
        translit_n=geti(params, "translit_n", 5),
    )


@dataclass
class RunArtifacts:
    workdir: str
    config_hash: str
    phrase_table: str = ""
    alignments: str = ""
    fwd_ttable: str = ""
    rev_ttable: str = ""
    lm_arpa: str = ""
    lm_binary: str = ""
    weights: str = ""
    source_vocab: str = ""
    mined_pairs: str = ""
    char_model_dir: str = ""
    rule_hashes: dict = field(default_factory=dict)

    def model_files(self):
        files = [self.phrase_table, self.alignments, self.fwd_ttable,
                 self.rev_ttable, self.lm_arpa, self.lm_binary, self.weights,
                 self.source_vocab]
        if self.mined_pairs:
            files.append(self.mined_pairs)
        if self.char_model_dir:
            d = Path(self.char_model_dir)
            files.extend(str(p) for p in sorted(d.iterdir()))
        return [f for f in files if f]

    def save(self, path):
        meta = {"": {
            "config_hash": self.config_hash,
            "workdir": self.workdir,
            "phrase_table": self.phrase_table,
            "alignments": self.alignments,
            "fwd_ttable": self.fwd_ttable,
            "rev_ttable": self.rev_ttable,
            "lm_arpa": self.lm_arpa,
            "lm_binary": self.lm_binary,
            "weights": self.weights,
            "source_vocab": self.source_vocab,
            "mined_pairs": self.mined_pairs,
            "char_model_dir": self.char_model_dir,
        }, "rule_hashes": dict(self.rule_hashes)}
        write_kv_file(meta, path)

    @classmethod
    def load(cls, path):
        sections = read_kv_file(path)
        base = sections.get("", {})
        return cls(
            workdir=base.get("workdir", ""),
            config_hash=base.get("config_hash", ""),
            phrase_table=base.get("phrase_table", ""),
            alignments=base.get("alignments", ""),
            fwd_ttable=base.get("fwd_ttable", ""),
            rev_ttable=base.get("rev_ttable", ""),
            lm_arpa=base.get("lm_arpa", ""),
            lm_binary=base.get("lm_binary", ""),
            weights=base.get("weights", ""),
            source_vocab=base.get("source_vocab", ""),
            mined_pairs=base.get("mined_pairs", ""),
            char_model_dir=base.get("char_model_dir", ""),
            rule_hashes=dict(sections.get("rule_hashes", {})),
        )


def _file_hash(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


class _RunLog:
    def __init__(self, path):
        self.path = path

    def __call__(self, stage, message):
        stamp = time.strftime("%Y-%m-%dT%H:%M:%S")
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(f"{stamp}\t{stage}\t{message}\n")
        log.info("[%s] %s", stage, message)


class _Lock:
    """Advisory per-workdir lock file."""

    def __init__(self, workdir):
        self.path = Path(workdir) / ".lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StageError("lock", f"{self.path} exists; another run owns "
                             f"this working directory") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


def _preprocess_config(config):
    suffix_rules = None
    preorder_rules = []
    steps = config.effective_steps
    if "suffix" in steps:
        if not config.suffix_rules or not Path(config.suffix_rules).exists():
            raise ConfigError(f"suffix rule file missing: {config.suffix_rules!r}")
        suffix_rules = morpho.load_suffix_rules(config.suffix_rules)
    if "preorder" in steps:
        if not config.preorder_rules or not Path(config.preorder_rules).exists():
            raise ConfigError(f"preorder rule file missing: {config.preorder_rules!r}")
        preorder_rules = morpho.load_preorder_rules(config.preorder_rules)
    return morpho.PreprocessConfig(
        steps=steps,
        suffix_rules=suffix_rules,
        compound_min_part_len=config.compound_min_part_len,
        compound_min_freq=config.compound_min_freq,
        preorder_rules=preorder_rules,
    )


def _rule_hashes(config):
    hashes = {}
    for name in ("suffix_rules", "preorder_rules", "stemmer_source", "stemmer_target"):
        path = getattr(config, name)
        if path and Path(path).exists():
            hashes[name] = _file_hash(path)
    return hashes


def _write_vocab(vocab, path):
    with open(path, "w", encoding="utf-8") as fh:
        for token in sorted(vocab.counts):
            fh.write(f"{token}\t{vocab.counts[token]}\n")


def _read_vocab(path):
    vocab = Vocabulary()
    for line in read_lines(path):
        if not line:
            continue
        token, count = line.split("\t")
        vocab.counts[token] = int(count)
        vocab.total_tokens += int(count)
    return vocab


def train_pipeline(config, workdir):
    """Run every training stage; returns RunArtifacts.

    Stage failures raise StageError with the stage name after removing
    anything the failed run created under `workdir`.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    runlog = _RunLog(workdir / "run.log")
    created = []

    def track(path):
        created.append(Path(path))
        return str(path)

    art = RunArtifacts(str(workdir), config.config_hash(),
                       rule_hashes=_rule_hashes(config))
    stage = "setup"
    try:
        with _Lock(workdir):
            stage = "corpus"
            runlog(stage, f"loading {config.train_source} / {config.train_target}")
            corpus = load_parallel(config.train_source, config.train_target,
                                   script_profile=config.script_profile,
                                   assume_tokenized=config.assume_tokenized)
            corpus, dropped = corpus.filter_long(config.max_train_len)
            runlog(stage, f"{len(corpus)} pairs kept, {len(dropped)} over-length dropped")
            src_sents = [list(p.source) for p in corpus.pairs]
            tgt_sents = [list(p.target) for p in corpus.pairs]
            src_vocab = build_vocabulary(src_sents)
            art.source_vocab = track(workdir / "source_vocab.tsv")
            _write_vocab(src_vocab, art.source_vocab)

            stage = "preprocess"
            pre = _preprocess_config(config)
            if pre.steps:
                runlog(stage, f"applying steps: {', '.join(pre.steps)}")
                src_sents, changes = morpho.apply_preprocessing(
                    src_sents, pre, vocabulary=src_vocab)
                morpho.write_change_log(changes, track(workdir / "preprocess.log"))
                write_lines((" ".join(s) for s in src_sents),
                            track(workdir / "train.preprocessed.src"))
                runlog(stage, f"{len(changes)} token changes logged")
            else:
                runlog(stage, "no preprocessing for this system")
            pairs = list(zip(src_sents, tgt_sents))

            stage = "align"
            stemmer_src = stemmer_tgt = None
            if config.align_factor == "stem":
                if config.stemmer_source:
                    stemmer_src = morpho.load_stemmer(config.stemmer_source)
                if config.stemmer_target:
                    stemmer_tgt = morpho.load_stemmer(config.stemmer_target)
                runlog(stage, "aligning on stem factor")
            matrices, fwd, rev = align.align_corpus(
                pairs, config.em_iterations,
                stemmer_src=stemmer_src, stemmer_tgt=stemmer_tgt)
            art.alignments = track(workdir / "alignments.pharaoh")
            align.write_pharaoh(matrices, art.alignments)
            art.fwd_ttable = track(workdir / "ttable.fwd.tsv")
            art.rev_ttable = track(workdir / "ttable.rev.tsv")
            fwd.write(art.fwd_ttable)
            rev.write(art.rev_ttable)
            runlog(stage, f"model1 final log-likelihood "
                          f"{fwd.log_likelihoods[-1]:.4f}")

            stage = "extract"
            occurrences = phrase.extract_corpus(pairs, matrices,
                                                config.max_phrase_len)
            table = phrase.score_table(occurrences, fwd, rev)
            art.phrase_table = track(workdir / "phrase_table.txt")
            table.write(art.phrase_table)
            runlog(stage, f"{len(table)} phrase pairs scored")

            stage = "lm-train"
            lm_lines = clean_monolingual(read_lines(config.lm_corpus))
            if config.track == "unconstrained":
                for extra in config.extra_lm_corpora:
                    lm_lines.extend(clean_monolingual(read_lines(extra)))
            counts = ngram_lm.count_ngrams(lm_lines, config.lm_order)
            model = ngram_lm.estimate_mkn(counts)
            art.lm_arpa = track(workdir / "lm.arpa")
            ngram_lm.write_arpa(model, art.lm_arpa)
            # the deployed model is the ARPA round-trip, so text and
            # binary backends answer queries identically
            model = ngram_lm.read_arpa(art.lm_arpa)
            art.lm_binary = track(workdir / "lm.bin")
            ngram_lm.binarize(model, art.lm_binary)
            runlog(stage, f"{config.lm_order}-gram LM over {len(lm_lines)} lines")

            if config.uses_translit:
                stage = "translit"
                harvested = translit.harvest_one_to_one(pairs, matrices)
                runlog(stage, f"{len(harvested)} one-to-one pairs harvested")
                mined = translit.mine_pairs(harvested, config.translit_rounds,
                                            config.translit_threshold)
                art.mined_pairs = track(workdir / "mined_pairs.tsv")
                mined.write(art.mined_pairs)
                accepted = mined.accepted()
                runlog(stage, f"{len(accepted)} pairs accepted at "
                              f"threshold {mined.threshold}")
                char_model = translit.train_char_model(accepted)
                art.char_model_dir = str(workdir / "char_model")
                save_char_model(char_model, track(art.char_model_dir))

            stage = "tune"
            dconf = decoder.DecoderConfig(
                beam_size=config.beam_size,
                distortion_limit=config.distortion_limit,
                nbest_size=config.nbest_size,
                translit_n=config.translit_n,
            )
            if config.tune_rounds > 0 and config.dev_source:
                dev = load_parallel(config.dev_source, config.dev_target,
                                    script_profile=config.script_profile,
                                    assume_tokenized=config.assume_tokenized)
                dev_src = [list(p.source) for p in dev.pairs]
                if pre.steps:
                    dev_src, _ = morpho.apply_preprocessing(dev_src, pre,
                                                            vocabulary=src_vocab)
                dev_refs = [list(p.target) for p in dev.pairs]
                word_lm = ngram_lm.load_binary(art.lm_binary)
                dconf = decoder.tune_weights(dev_src, dev_refs, table, word_lm,
                                             dconf, rounds=config.tune_rounds)
                runlog(stage, f"tuned weights over {config.tune_rounds} rounds")
            else:
                runlog(stage, "using default weights")
            art.weights = track(workdir / "weights.kv")
            decoder.write_weights(dconf.weights, art.weights)

            stage = "finalize"
            art.save(workdir / "artifacts.kv")
            runlog(stage, "training complete")
            return art
    except SmtError as exc:
        runlog(stage, f"FAILED: {exc}")
        for path in created:
            if path.is_dir():
                for child in sorted(path.iterdir(), reverse=True):
                    child.unlink(missing_ok=True)
                path.rmdir()
            else:
                path.unlink(missing_ok=True)
        if isinstance(exc, StageError):
            raise
        raise StageError(stage, str(exc)) from exc


def save_char_model(model, dirpath):
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    model.fwd.write(d / "char.fwd.tsv")
    model.rev.write(d / "char.rev.tsv")
    ngram_lm.write_arpa(model.char_lm, d / "char_lm.arpa")
    write_kv_file({"": {"length_mean": f"{model.length_mean:.10g}",
                        "length_var": f"{model.length_var:.10g}"}},
                  d / "length.kv")


def load_char_model(dirpath):
    d = Path(dirpath)
    for name in ("char.fwd.tsv", "char.rev.tsv", "char_lm.arpa", "length.kv"):
        if not (d / name).exists():
            raise ConfigError(f"char model file missing: {d / name}")
    stats = read_kv_file(d / "length.kv")[""]
    return translit.CharModel(
        fwd=align.TranslationTable.read(d / "char.fwd.tsv"),
        rev=align.TranslationTable.read(d / "char.rev.tsv"),
        char_lm=ngram_lm.read_arpa(d / "char_lm.arpa"),
        length_mean=float(stats["length_mean"]),
        length_var=float(stats["length_var"]),
    )


def translate(config, artifacts, input_path, output_path):
    """Translate a source file with trained artifacts.

    The input receives exactly the training-time preprocessing (rule file
    hashes are re-checked, not assumed); S3 routes OOV output slots
    through the transliteration model and LM rescoring. Output line count
    always equals input line count.
    """
    for name, digest in artifacts.rule_hashes.items():
        path = getattr(config, name)
        if not path or not Path(path).exists():
            raise ConfigError(f"rule file {name} vanished since training: {path!r}")
        if _file_hash(path) != digest:
            raise ConfigError(f"rule file {name} changed since training: {path}")
    for attr in ("phrase_table", "lm_binary", "weights", "source_vocab"):
        path = getattr(artifacts, attr)
        if not path or not Path(path).exists():
            raise ConfigError(f"missing artifact {attr}: {path!r}")

    table = phrase.PhraseTable.read(artifacts.phrase_table)
    word_lm = ngram_lm.load_binary(artifacts.lm_binary)
    weights = decoder.read_weights(artifacts.weights)
    dconf = decoder.DecoderConfig(
        weights=weights,
        beam_size=config.beam_size,
        distortion_limit=config.distortion_limit,
        nbest_size=config.nbest_size,
        translit_n=config.translit_n,
    )
    pre = _preprocess_config(config)
    src_vocab = _read_vocab(artifacts.source_vocab)
    lines = read_lines(input_path)
    sentences = [line.split() for line in lines]
    if pre.steps:
        sentences, _ = morpho.apply_preprocessing(sentences, pre,
                                                  vocabulary=src_vocab)
    char_model = None
    if config.uses_translit:
        char_model = load_char_model(artifacts.char_model_dir)
    outputs = []
    for sent_id, tokens in enumerate(sentences):
        nbest = decoder.decode(tokens, table, word_lm, dconf, sent_id=sent_id)
        if char_model is not None:
            nbest = translit.integrate_oov(nbest, char_model, word_lm,
                                           config.translit_n, weights)
        best = nbest.best()
        outputs.append(" ".join(best.tokens) if best else "")
    write_lines(outputs, output_path)
    return output_path


def count_untranslated(lines, target_vocab):
    """Tokens outside the known target vocabulary (passthrough residue)."""
    return sum(1 for line in lines for tok in line.split()
               if tok not in target_vocab)


def target_vocabulary(config):
    """Known target-side tokens: training target plus LM corpora."""
    vocab = set()
    for tokens in read_lines(config.train_target):
        vocab.update(tokens.split())
    sources = [config.lm_corpus] + list(config.extra_lm_corpora)
    for path in sources:
        if path and Path(path).exists():
            for line in clean_monolingual(read_lines(path)):
                vocab.update(line.split())
    return vocab


def run_grid(configs, workdir):
    """Train, translate, and evaluate each config; returns (reports,
    failures). Failed configs are reported and skipped; surviving rows
    are still emitted to grid_report.tsv and pretty-printed."""
    if not configs:
        raise ConfigError("run_grid needs at least one config")
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    reports = []
    failures = []
    for config in configs:
        run_dir = workdir / f"{config.pair}.{config.system}.{config.track}"
        try:
            art = train_pipeline(config, run_dir)
            out_path = run_dir / "test.output"
            translate(config, art, config.test_source, out_path)
            rep = metrics.evaluate_system(out_path, config.test_target,
                                          system_id=config.system,
                                          language_pair=config.pair)
            reports.append(rep)
        except SmtError as exc:
            log.error("config %s/%s failed: %s", config.pair, config.system, exc)
            failures.append((config, str(exc)))
    metrics.write_report(reports, workdir / "grid_report.tsv")
    return reports, failures
