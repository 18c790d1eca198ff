"""
Evaluation pipeline

Builds the comparison table for one corpus: the original text, its n-gram
shuffles, text generated by each n-gram smoothing scheme, the Simon and
Pitman-Yor processes and (with a treebank) a PCFG, each analyzed against the
original. Rows are independent and seeded with base seed + row index.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from scipy import stats

from analysis.report import build_document, input_digest, write_json
from analysis.scaling import BLANK, ScalingReport, full_report
from config import RunConfig
from corpus.textio import TokenStream, shuffle_ngram, split_stream
from corpus.treebank import Treebank
from errors import ScalingEvalError, VocabularyError, error_section
from models.ngram import NGramModel, ngram_train, perplexity
from models.pcfg import generate_corpus, induce_grammar
from models.processes import PitmanYorParams, SimonParams, pitman_yor_generate, simon_generate

logger = logging.getLogger(__name__)

RECOMMENDED_TOKENS = 1_000_000

SHUFFLE_SIZES = (1, 2, 5, 10)
NGRAM_ROWS = (("mle", 3), ("mle", 5), ("interp", 3), ("katz", 3), ("katz", 5), ("kn", 3), ("kn", 5))

COLUMNS = (
    "row", "source", "seed", "perplexity",
    "zipf", "heaps", "heaps_err", "ebeling", "ebeling_err",
    "taylor", "taylor_err", "lrc", "lrc_err", "lrc_verdict", "status",
)

SMOOTHING_NAMES = {"mle": "MLE", "interp": "Interpolation", "katz": "Katz", "kn": "Kneser-Ney"}


@dataclass(frozen=True)
class RowSpec:
    name: str
    kind: str
    params: Tuple = ()


@dataclass
class SummaryRow:
    index: int
    name: str
    seed: int
    perplexity: Optional[float] = None
    report: Optional[ScalingReport] = None
    error: Optional[Dict[str, str]] = None

    @property
    def status(self) -> str:
        if self.error is not None:
            return self.error["error"]
        if self.report is not None and self.report.errors:
            return "partial"
        return "ok"

    def values(self) -> Dict[str, object]:
        values = {
            "row": self.index, "source": self.name, "seed": self.seed,
            "perplexity": self.perplexity, "status": self.status,
        }
        if self.report is None:
            return values
        exponents = self.report.exponents()
        errors = self.report.rms_errors()
        values["zipf"] = self.report.q1_verdicts.get("zipf")
        for name in ("heaps", "ebeling", "taylor", "lrc"):
            values[name] = exponents[name]
            values[f"{name}_err"] = errors[name]
        values["lrc_verdict"] = None if self.report.lrc is None else self.report.lrc.verdict
        return values

    def to_dict(self) -> Dict:
        result = {column: self.values().get(column) for column in COLUMNS}
        if self.perplexity is not None and math.isinf(self.perplexity):
            result["perplexity"] = None
            result["perplexity_infinite"] = True
        result["error"] = self.error
        result["analysis"] = None if self.report is None else self.report.to_dict()
        return result


@dataclass
class EvaluationSummary:
    rows: List[SummaryRow] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def perplexity_taylor_correlation(self) -> Optional[float]:
        """Pearson r between perplexity and Taylor exponent over rows that have both"""
        pairs = [
            (row.perplexity, row.report.taylor.exponent)
            for row in self.rows
            if row.perplexity is not None and math.isfinite(row.perplexity)
            and row.report is not None and row.report.taylor is not None
        ]
        if len(pairs) < 3:
            return None
        x, y = zip(*pairs)
        if len(set(x)) < 2 or len(set(y)) < 2:
            return None
        return float(stats.pearsonr(x, y)[0])

    def to_tsv(self) -> str:
        lines = ["\t".join(COLUMNS)]
        for row in self.rows:
            values = row.values()
            lines.append("\t".join(_format(values.get(column)) for column in COLUMNS))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> Dict:
        return {
            "columns": list(COLUMNS),
            "rows": [row.to_dict() for row in self.rows],
            "perplexity_taylor_correlation": self.perplexity_taylor_correlation(),
            "warnings": self.warnings,
        }


def _format(value) -> str:
    if value is None:
        return BLANK
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return f"{value:.2f}" if value >= 10 else f"{value:.4f}"
    return str(value)


def pipeline_rows(with_treebank: bool = False) -> List[RowSpec]:
    rows = [RowSpec("original", "original")]
    rows += [RowSpec(f"{n}-gram shuffle", "shuffle", (n,)) for n in SHUFFLE_SIZES]
    rows += [
        RowSpec(f"{SMOOTHING_NAMES[smoothing]} {order}-gram", "ngram", (smoothing, order))
        for smoothing, order in NGRAM_ROWS
    ]
    rows += [RowSpec("Simon", "simon"), RowSpec("Pitman-Yor", "pitman_yor")]
    if with_treebank:
        rows.append(RowSpec("PCFG", "pcfg"))
    return rows


class Pipeline:
    """Runs every row of the evaluation table for one corpus"""

    def __init__(self, stream: TokenStream, config: RunConfig, treebank: Optional[Treebank] = None):
        self.stream = stream
        self.config = config
        self.treebank = treebank
        self.train, self.held_out = split_stream(stream, config.eval_fraction)
        self.reference: Optional[ScalingReport] = None
        self.specs = pipeline_rows(treebank is not None)
        self.warnings: List[str] = []
        if len(stream) < RECOMMENDED_TOKENS:
            message = (
                f"corpus has {len(stream)} tokens (< {RECOMMENDED_TOKENS}); "
                "exponents will have wide variance"
            )
            logger.warning(message)
            self.warnings.append(message)

    def _analyze(self, stream: TokenStream, include_ebeling: bool = True) -> ScalingReport:
        return full_report(stream, self.config.analysis, reference=self.reference,
                           include_ebeling=include_ebeling)

    def _held_out_perplexity(self, spec: RowSpec, model: NGramModel) -> Optional[float]:
        if not len(self.held_out):
            return None
        try:
            return perplexity(model, self.held_out).value
        except VocabularyError as e:
            # unpreprocessed text: held-out words unseen in training and no <unk>
            logger.warning(f"{spec.name}: no held-out perplexity ({e}); preprocess with --min-freq to get one")
            return None

    def _row_text(self, spec: RowSpec, seed: int) -> Tuple[TokenStream, Optional[float], bool]:
        """(text to analyze, held-out perplexity or None, whether Ebeling applies)"""
        model = self.config.model
        length = self.config.generate_length
        if spec.kind == "shuffle":
            return shuffle_ngram(self.stream, spec.params[0], seed), None, True
        if spec.kind == "ngram":
            smoothing, order = spec.params
            trained = ngram_train(self.train, order, smoothing, model.interp_held_out, model.katz_threshold)
            return trained.generate(length, seed), self._held_out_perplexity(spec, trained), True
        if spec.kind == "simon":
            return simon_generate(SimonParams(model.simon_a, seed), length), None, False
        if spec.kind == "pitman_yor":
            return pitman_yor_generate(PitmanYorParams(model.py_a, model.py_b, seed), length), None, False
        if spec.kind == "pcfg":
            grammar = induce_grammar(self.treebank)
            return generate_corpus(grammar, length, seed, model.max_depth), None, True
        raise ValueError(f"unknown row kind {spec.kind}")

    def run_row(self, index: int) -> SummaryRow:
        spec = self.specs[index]
        seed = self.config.seed + index
        row = SummaryRow(index, spec.name, seed)
        logger.info(f"Row {index} ({spec.name}) started, seed {seed}")
        try:
            if spec.kind == "original":
                row.report = self._analyze(self.stream)
            else:
                text, row.perplexity, include_ebeling = self._row_text(spec, seed)
                row.report = self._analyze(text, include_ebeling)
        except (ScalingEvalError, ValueError) as e:
            logger.warning(f"Row {index} ({spec.name}) failed: {e}")
            row.error = error_section(e)
        logger.info(f"Row {index} ({spec.name}) finished: {row.status}")
        return row

    def run(self, workers: int = 1) -> EvaluationSummary:
        original = self.run_row(0)
        self.reference = original.report
        indices = range(1, len(self.specs))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                rest = list(pool.map(self.run_row, indices))
        else:
            rest = [self.run_row(i) for i in indices]
        return EvaluationSummary([original] + rest, list(self.warnings))


def run_pipeline(stream: TokenStream, config: RunConfig, treebank: Optional[Treebank] = None) -> EvaluationSummary:
    return Pipeline(stream, config, treebank).run(max(1, config.workers))


def write_summary(summary: EvaluationSummary, config: RunConfig, out_dir: str,
                  digest: Optional[Dict] = None) -> List[str]:
    """summary.tsv and summary.json in out_dir"""
    os.makedirs(out_dir, exist_ok=True)
    tsv_path = os.path.join(out_dir, "summary.tsv")
    with open(tsv_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(summary.to_tsv())
    seeds = {row.name: row.seed for row in summary.rows}
    treebank = {"treebank": input_digest(config.treebank)} if config.treebank else None
    document = build_document(config, {"summary": summary.to_dict()}, digest, seeds, treebank)
    json_path = write_json(document, os.path.join(out_dir, "summary.json"))
    return [tsv_path, json_path]
