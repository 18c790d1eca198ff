#!/usr/bin/env python3
"""
scaling-eval

Command-line interface: analyze a text for the five scaling properties, shuffle
it, train / score / sample n-gram models, sample the urn processes, run the
PCFG pipeline and build the full evaluation table.

Exit status: 0 success, 2 insufficient data or bad parameters, 3 input format
or vocabulary problem, 4 internal error.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional, Tuple

try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    print("Note: python-dotenv not installed. Using environment variables directly.")

from analysis.pipeline import run_pipeline, write_summary
from analysis.report import (
    analysis_document, build_document, dumps, failure_exit_code, input_digest,
    read_reference, upload_outputs, write_json, write_report_dir,
)
from analysis.scaling import full_report
from config import TOOL_NAME, TOOL_VERSION, RunConfig
from corpus.textio import (
    TokenStream, preprocess, read_corpus, sample_chunks, shuffle_ngram, write_token_file,
)
from corpus.treebank import read_treebank
from errors import InputFormatError, InsufficientDataError, ScalingEvalError
from models.ngram import SMOOTHING_SCHEMES, NGramModel, ngram_train, perplexity
from models.pcfg import (
    CkyParser, binarize, generate_corpus, grammar_summary, induce_grammar,
    nll_length_profile, read_grammar, write_grammar, write_profile,
)
from models.processes import PitmanYorParams, SimonParams, pitman_yor_generate, simon_generate

logger = logging.getLogger(TOOL_NAME)

SOURCES = ("ngram", "simon", "pitman-yor", "pcfg")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL_NAME, description="Scaling properties of natural and generated text")
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {TOOL_VERSION}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="Input text (local path or gs://bucket/object)")
    common.add_argument("--output", help="Output file or directory")
    common.add_argument("--seed", type=int, help="Base RNG seed")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    text = argparse.ArgumentParser(add_help=False)
    text.add_argument("--min-freq", type=int, help="Words rarer than this become <unk>")
    text.add_argument("--replace-numbers", action="store_true", default=None, help="Replace numbers with N")
    text.add_argument("--number-pattern", help="Full-match regex defining a number")

    analysis = argparse.ArgumentParser(add_help=False)
    analysis.add_argument("--taylor-l", type=int, help="Taylor segment length (default 5620)")
    analysis.add_argument("--lrc-q", type=int, help="Rare-word fraction 1/Q (default 16)")
    analysis.add_argument("--format", choices=("json", "tsv"), dest="report_format", help="Report format")
    analysis.add_argument("--use-gcs", action="store_true", default=None, help="Upload the output directory to GCS")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--order", type=int, help="n-gram order")
    model.add_argument("--smoothing", choices=SMOOTHING_SCHEMES, help="n-gram smoothing")
    model.add_argument("--simon-a", type=float, help="Simon new-word probability")
    model.add_argument("--py-a", type=float, help="Pitman-Yor discount")
    model.add_argument("--py-b", type=float, help="Pitman-Yor strength")
    model.add_argument("--max-depth", type=int, help="PCFG derivation depth cap")
    model.add_argument("--length", type=int, dest="generate_length", help="Generated tokens")

    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("analyze", parents=[common, text, analysis], help="Measure the five scaling properties")
    p.add_argument("--reference", help="Report (or exponent JSON) of the training text, for exponent deltas")
    p.add_argument("--no-ebeling", action="store_false", dest="include_ebeling", default=None,
                   help="Skip the character-level analysis")

    p = sub.add_parser("shuffle", parents=[common, text], help="Shuffle n-token chunks")
    p.add_argument("--chunk-size", "-n", type=int, help="Chunk length n (default 1)")

    sub.add_parser("train", parents=[common, text, model], help="Train an n-gram model")

    p = sub.add_parser("score", parents=[common, text], help="Perplexity of a text under a model")
    p.add_argument("--model", dest="model_path", required=True, help="Model file written by train")

    p = sub.add_parser("generate", parents=[common, model], help="Sample text from a model or process")
    p.add_argument("--source", choices=SOURCES, help="Generator (default ngram)")
    p.add_argument("--model", dest="model_path", help="n-gram model file (source ngram)")
    p.add_argument("--treebank", help="Treebank to induce the grammar from (source pcfg)")
    p.add_argument("--grammar", help="Grammar file written by pcfg (source pcfg)")

    p = sub.add_parser("pcfg", parents=[common, text, model], help="Induce a grammar and profile NLL by length")
    p.add_argument("--treebank", required=True, help="Penn-style bracketed trees")
    p.add_argument("--unk-hapax", action="store_true", default=None, help="Map words seen once to <unk>")
    p.add_argument("--sentence-cap", type=int, help="Longest item scored (default 50)")
    p.add_argument("--chunk-lengths",
                   help="Comma-separated chunk lengths drawn from --input (default 5,10,15,20,25,30)")
    p.add_argument("--chunks-per-length", type=int, help="Chunks scored per length (default 20)")

    p = sub.add_parser("pipeline", parents=[common, text, analysis, model], help="Build the evaluation table")
    p.add_argument("--treebank", help="Adds the PCFG row")
    p.add_argument("--eval-fraction", type=float, help="Held-out tail for perplexity (default 0.1)")
    p.add_argument("--workers", type=int, help="Rows evaluated in parallel")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Environment defaults, then explicit flags"""
    config = RunConfig.from_env(args.subcommand)
    for name in ("input", "output", "seed", "report_format", "min_freq", "replace_numbers",
                 "number_pattern", "generate_length", "eval_fraction", "workers",
                 "treebank", "reference", "use_gcs", "include_ebeling", "chunk_size",
                 "source", "model_path", "grammar", "unk_hapax", "chunks_per_length"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(config, name, value)
    for name in ("taylor_l", "lrc_q"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(config.analysis, name, value)
    for name in ("order", "smoothing", "simon_a", "py_a", "py_b", "max_depth", "sentence_cap"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(config.model, name, value)
    if getattr(args, "chunk_lengths", None) is not None:
        config.chunk_lengths = parse_chunk_lengths(args.chunk_lengths)
    return config


def load_text(config: RunConfig) -> TokenStream:
    if not config.input:
        raise ValueError("--input is required")
    stream = read_corpus(config.input)
    if config.min_freq > 1 or config.replace_numbers:
        stream = preprocess(stream, config.min_freq, config.replace_numbers, config.number_pattern)
    return stream


def emit(document, path: Optional[str]):
    if path:
        write_json(document, path)
    else:
        sys.stdout.write(dumps(document))


def cmd_analyze(args: argparse.Namespace, config: RunConfig) -> int:
    stream = load_text(config)
    reference = read_reference(config.reference) if config.reference else None
    report = full_report(stream, config.analysis, reference=reference, include_ebeling=config.include_ebeling)
    document = analysis_document(config, report, stream, input_digest(config.input, stream))
    if config.output:
        written = write_report_dir(document, report, config.output, config.report_format)
        logger.info(f"Wrote {len(written)} files to {config.output}")
        if config.use_gcs:
            upload_outputs(config.output)
    else:
        emit(document, None)
    return failure_exit_code(report)


def cmd_shuffle(args: argparse.Namespace, config: RunConfig) -> int:
    if not config.output:
        raise ValueError("--output is required")
    stream = load_text(config)
    shuffled = shuffle_ngram(stream, config.chunk_size, config.seed)
    write_token_file(shuffled, config.output)
    logger.info(f"Wrote {len(shuffled)} tokens shuffled in {config.chunk_size}-token chunks to {config.output}")
    return 0


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    if not config.output:
        raise ValueError("--output is required")
    stream = load_text(config)
    model = ngram_train(stream, config.model.order, config.model.smoothing,
                        config.model.interp_held_out, config.model.katz_threshold)
    model.save(config.output)
    return 0


def cmd_score(args: argparse.Namespace, config: RunConfig) -> int:
    model = NGramModel.load(config.model_path)
    stream = load_text(config)
    result = perplexity(model, stream)
    document = build_document(config, {
        "model": model.parameters(),
        "perplexity": result.to_dict(),
    }, input_digest(config.input, stream), inputs={"model": input_digest(config.model_path)})
    emit(document, config.output)
    return 0


def cmd_generate(args: argparse.Namespace, config: RunConfig) -> int:
    if args.seed is None:
        raise ValueError("--seed is required for generation")
    if not config.output:
        raise ValueError("--output is required")
    length = config.generate_length
    if config.source == "ngram":
        if not config.model_path:
            raise ValueError("--model is required for source ngram")
        stream = NGramModel.load(config.model_path).generate(length, config.seed)
    elif config.source == "simon":
        stream = simon_generate(SimonParams(config.model.simon_a, config.seed), length)
    elif config.source == "pitman-yor":
        stream = pitman_yor_generate(PitmanYorParams(config.model.py_a, config.model.py_b, config.seed), length)
    else:
        if config.grammar:
            grammar = read_grammar(config.grammar)
        elif config.treebank:
            grammar = induce_grammar(read_treebank(config.treebank))
        else:
            raise ValueError("--grammar or --treebank is required for source pcfg")
        stream = generate_corpus(grammar, length, config.seed, config.model.max_depth)
    write_token_file(stream, config.output)
    logger.info(f"Wrote {len(stream)} {config.source} tokens to {config.output}")
    return 0


def parse_chunk_lengths(spec: str) -> Tuple[int, ...]:
    try:
        lengths = tuple(sorted({int(part) for part in spec.split(",") if part.strip()}))
    except ValueError:
        raise ValueError(f"--chunk-lengths must be comma-separated integers, got {spec!r}")
    if not lengths or lengths[0] < 1:
        raise ValueError("--chunk-lengths needs positive lengths")
    return lengths


def cmd_pcfg(args: argparse.Namespace, config: RunConfig) -> int:
    if not config.output:
        raise ValueError("--output is required")
    os.makedirs(config.output, exist_ok=True)
    cap = config.model.sentence_cap
    treebank = read_treebank(config.treebank)
    grammar = induce_grammar(treebank, unk_hapax=config.unk_hapax)
    write_grammar(grammar, os.path.join(config.output, "grammar.tsv"))
    parser = CkyParser(binarize(grammar), cap)

    profiles = {"treebank": nll_length_profile(parser, treebank.sentences())}
    write_profile(profiles["treebank"], os.path.join(config.output, "profile_treebank.tsv"), "treebank")
    digest = None
    if config.input:
        stream = load_text(config)
        digest = input_digest(config.input, stream)
        chunks = []
        for n in (n for n in config.chunk_lengths if n <= cap):
            try:
                chunks += sample_chunks(stream, n, config.chunks_per_length, config.seed + n)
            except InsufficientDataError as e:
                logger.warning(f"No chunks of length {n}: {e}")
        profiles["input"] = nll_length_profile(parser, chunks)
        write_profile(profiles["input"], os.path.join(config.output, "profile_input.tsv"), config.input)

    document = build_document(config, {
        "grammar": grammar_summary(grammar),
        "profiles": {name: profile.to_dict() for name, profile in profiles.items()},
    }, digest, inputs={"treebank": input_digest(config.treebank)})
    write_json(document, os.path.join(config.output, "pcfg.json"))
    return 0


def cmd_pipeline(args: argparse.Namespace, config: RunConfig) -> int:
    if not config.output:
        raise ValueError("--output is required")
    stream = load_text(config)
    treebank = read_treebank(config.treebank) if config.treebank else None
    summary = run_pipeline(stream, config, treebank)
    write_summary(summary, config, config.output, input_digest(config.input, stream))
    if config.use_gcs:
        upload_outputs(config.output)
    return 0


COMMANDS = {
    "analyze": cmd_analyze,
    "shuffle": cmd_shuffle,
    "train": cmd_train,
    "score": cmd_score,
    "generate": cmd_generate,
    "pcfg": cmd_pcfg,
    "pipeline": cmd_pipeline,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = resolve_config(args)
        return COMMANDS[args.subcommand](args, config)
    except ScalingEvalError as e:
        logger.error(f"{e.kind}: {e}")
        return e.exit_code
    except ValueError as e:
        logger.error(f"invalid parameter: {e}")
        return InsufficientDataError.exit_code
    except RuntimeError as e:
        logger.error(f"configuration error: {e}")
        return InsufficientDataError.exit_code
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return InputFormatError.exit_code
    except Exception as e:
        logger.error(f"internal error: {e}", exc_info=True)
        return ScalingEvalError.exit_code


if __name__ == "__main__":
    sys.exit(main())
