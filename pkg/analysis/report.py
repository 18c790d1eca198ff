"""
Report assembly and output

A report document carries the tool identity, the effective configuration, the
input digest, the RNG identity and the analysis sections. Documents are
serialized with sorted keys and no timestamps so identical runs produce
identical bytes.
"""

import hashlib
import json
import logging
import os
from typing import Dict, List, Optional

from analysis.powerlaw import PowerLawFit, write_points
from analysis.scaling import BLANK, PROPERTIES, ScalingReport
from config import RNG_NAME, TOOL_NAME, TOOL_VERSION, RunConfig
from corpus.gcs_storage import ReportStorage
from corpus.textio import TokenStream
from errors import InputFormatError, exit_code_for

logger = logging.getLogger(__name__)

REPORT_FILE = "report"

# Axis labels of the plot stubs
AXES = {
    "zipf": ("rank", "frequency"),
    "zipf_bigram": ("rank", "frequency"),
    "heaps": ("tokens", "types"),
    "ebeling": ("window length l", "m(l)"),
    "taylor": ("mean", "standard deviation"),
    "lrc": ("lag s", "c(s)"),
}


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def input_digest(path: Optional[str], stream: Optional[TokenStream] = None) -> Optional[Dict[str, str]]:
    """
    Content hash of the analyzed input

    Local files are hashed byte for byte; remote inputs are hashed through their
    rendered token file, which is what the analyses actually saw.
    """
    if path and not path.startswith("gs://") and os.path.isfile(path):
        return {"path": path, "sha256": sha256_file(path), "digest_of": "file"}
    if stream is not None:
        rendered = stream.render().encode("utf-8")
        return {"path": path, "sha256": hashlib.sha256(rendered).hexdigest(), "digest_of": "tokens"}
    return None


def build_document(config: RunConfig, sections: Dict, digest: Optional[Dict] = None,
                   seeds: Optional[Dict[str, int]] = None,
                   inputs: Optional[Dict[str, Optional[Dict]]] = None) -> Dict:
    """
    Report document

    digest is the hash of the main text; inputs holds the hash of every other
    file the run read (treebank, model, grammar, reference report), by role.
    """
    return {
        "tool": {"name": TOOL_NAME, "version": TOOL_VERSION},
        "config": config.to_dict(),
        "input": digest,
        "inputs": {role: value for role, value in (inputs or {}).items() if value is not None},
        "rng": {"generator": RNG_NAME, "seed": config.seed, "seeds": seeds or {}},
        **sections,
    }


def analysis_document(config: RunConfig, report: ScalingReport, stream: TokenStream,
                      digest: Optional[Dict] = None) -> Dict:
    reference = {"reference": input_digest(config.reference)} if config.reference else None
    return build_document(config, {"analysis": report.to_dict(stream)}, digest, inputs=reference)


def dumps(document: Dict) -> str:
    return json.dumps(document, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(document: Dict, path: str) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps(document))
    logger.info(f"Wrote {path}")
    return path


def _cell(value) -> str:
    if value is None:
        return BLANK
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def exponent_table(report: ScalingReport) -> str:
    """property, exponent, rms error, Q1 verdict, Q2 delta; one row per property"""
    exponents = report.exponents()
    errors = report.rms_errors()
    lines = ["property\texponent\trms_error\tq1\tq2_delta"]
    for name in PROPERTIES:
        lines.append("\t".join([
            name,
            _cell(exponents[name]),
            _cell(errors[name]),
            report.q1_verdicts.get(name, BLANK),
            _cell(report.q2_deltas.get(name)),
        ]))
    return "\n".join(lines) + "\n"


def failure_exit_code(report: ScalingReport) -> int:
    """
    Exit status of an analyze run

    0 while at least one property produced a result; otherwise the exit code
    of the first recorded failure.
    """
    if any(getattr(report, name) is not None for name in PROPERTIES):
        return 0
    for name in PROPERTIES:
        if name in report.errors:
            return exit_code_for(report.errors[name]["error"])
    return 0


def gnuplot_stub(name: str, data_file: str, fit: Optional[PowerLawFit]) -> str:
    x_label, y_label = AXES.get(name, ("z", "y"))
    lines = [
        f"# {name}: plot-ready data in {data_file}",
        "set logscale xy" if name != "lrc" else "set logscale x",
        f"set xlabel '{x_label}'",
        f"set ylabel '{y_label}'",
    ]
    if fit is not None:
        lines.append(f"f(x) = {fit.coefficient!r} * x ** {fit.exponent!r}")
        lines.append(f"plot '{data_file}' using 1:2 with points title '{name}', f(x) with lines title 'fit'")
    else:
        lines.append(f"plot '{data_file}' using 1:2 with points title '{name}'")
    return "\n".join(lines) + "\n"


def _fits(report: ScalingReport) -> Dict[str, Optional[PowerLawFit]]:
    return {
        "zipf": report.zipf_fit,
        "zipf_bigram": None,
        "heaps": report.heaps.fit if report.heaps else None,
        "ebeling": report.ebeling.fit if report.ebeling else None,
        "taylor": report.taylor.fit if report.taylor else None,
        "lrc": report.lrc.fit if report.lrc else None,
    }


def write_point_files(report: ScalingReport, out_dir: str, plot_stubs: bool = True) -> List[str]:
    """One TSV per measured point set plus a gnuplot stub next to it"""
    os.makedirs(out_dir, exist_ok=True)
    fits = _fits(report)
    written = []
    for name, points in report.point_sets().items():
        data_file = f"{name}.tsv"
        written.append(write_points(points, os.path.join(out_dir, data_file), header=name))
        if plot_stubs:
            stub = os.path.join(out_dir, f"{name}.gp")
            with open(stub, "w", encoding="utf-8", newline="\n") as f:
                f.write(gnuplot_stub(name, data_file, fits.get(name)))
            written.append(stub)
    return written


def write_report_dir(document: Dict, report: ScalingReport, out_dir: str,
                     report_format: str = "json") -> List[str]:
    """
    Write a complete analyze output directory

    Args:
        document: Report document from analysis_document
        report: The analyses behind it, for point files and the TSV table
        out_dir: Output directory (created when missing)
        report_format: json or tsv for the summary file

    Returns:
        Paths written
    """
    os.makedirs(out_dir, exist_ok=True)
    written = [write_json(document, os.path.join(out_dir, f"{REPORT_FILE}.json"))]
    if report_format == "tsv":
        path = os.path.join(out_dir, f"{REPORT_FILE}.tsv")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(exponent_table(report))
        written.append(path)
    written += write_point_files(report, out_dir)
    return written


def upload_outputs(out_dir: str, prefix: Optional[str] = None, storage: Optional[ReportStorage] = None) -> List[str]:
    """Copy an output directory to GCS; a failed upload leaves the local files and returns []"""
    prefix = prefix if prefix is not None else os.path.basename(os.path.normpath(out_dir))
    try:
        storage = storage or ReportStorage()
        return storage.upload_directory(out_dir, prefix)
    except Exception as e:
        logger.warning(f"GCS upload failed, results remain in {out_dir}: {e}")
        return []


def read_reference(path: str) -> Dict[str, Optional[float]]:
    """
    Exponents to compare against

    Accepts an analyze report (its analysis.exponents section) or a plain JSON
    object mapping property names to exponents.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise InputFormatError(f"cannot read reference: {e.strerror}", path=path)
    except json.JSONDecodeError as e:
        raise InputFormatError(f"reference is not JSON: {e.msg}", path=path, offset=e.pos)
    if isinstance(data, dict) and isinstance(data.get("analysis"), dict):
        data = data["analysis"].get("exponents", {})
    if not isinstance(data, dict):
        raise InputFormatError("reference must be a JSON object", path=path)
    reference = {}
    for name in PROPERTIES:
        value = data.get(name)
        if value is not None and not isinstance(value, (int, float)):
            raise InputFormatError(f"reference exponent {name} is not a number", path=path)
        reference[name] = None if value is None else float(value)
    return reference
