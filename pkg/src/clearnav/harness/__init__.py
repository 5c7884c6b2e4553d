"""Configuration, artifact I/O, stage pipelines, diagnostics and the CLI."""
from .config import (
    ConfigError,
    CorpusConfig,
    ExperimentConfig,
    LangPretrainConfig,
    VisPretrainConfig,
    load_config,
    save_config,
    tiny_config,
)
from .data import Corpus, DataError, build_corpus, load_corpus, stream_seed
from .diagnostics import dump_attention, gap_report, nearest_tokens, nearest_words
from .pipeline import (
    PipelineResult,
    RunLog,
    embed_instructions,
    mine,
    pretrain_lang,
    pretrain_vis,
    report_bytes,
    retrieval_accuracy,
    run_pipeline,
    state_digest,
)
