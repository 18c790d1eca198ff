#!/usr/bin/env python3
"""
scaling-eval - Flask Web Application

HTTP front end for the analyses and generators, served by gunicorn
(see gunicorn.conf.py).
"""

import os
import logging
from dataclasses import replace
from flask import Flask, request, jsonify

# Configure logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    logger.info("Note: python-dotenv not installed. Using environment variables directly.")

from analysis.scaling import full_report
from config import TOOL_NAME, TOOL_VERSION, AnalysisConfig, get_int_env
from corpus.textio import preprocess, shuffle_ngram, tokenize
from errors import ScalingEvalError
from models.processes import PitmanYorParams, SimonParams, pitman_yor_generate, simon_generate

MAX_GENERATE_LENGTH = get_int_env("SCALING_API_MAX_LENGTH", 1_000_000)

app = Flask(__name__)


class RequestError(ValueError):
    """Malformed request body"""


def _body() -> dict:
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        raise RequestError("Request body must be a JSON object")
    return data


def _text(data: dict) -> str:
    text = data.get("text")
    if not isinstance(text, str):
        raise RequestError("Missing 'text' field in request body")
    return text


def _int(data: dict, name: str, default: int) -> int:
    value = data.get(name, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise RequestError(f"'{name}' must be an integer")
    return value


def _float(data: dict, name: str, default: float) -> float:
    value = data.get(name, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise RequestError(f"'{name}' must be a number")
    return float(value)


def _failure(endpoint: str, e: Exception):
    if isinstance(e, ScalingEvalError):
        logger.warning(f"{endpoint}: {e.kind}: {e}")
        return jsonify(e.to_dict()), 422
    if isinstance(e, ValueError):
        return jsonify({"error": "bad-request", "message": str(e)}), 400
    logger.error(f"{endpoint} error: {e}", exc_info=True)
    return jsonify({"error": "internal", "message": f"Failed to process {endpoint} request"}), 500


@app.route("/", methods=["GET"])
def home():
    """Home endpoint with API information"""
    return jsonify({
        "name": TOOL_NAME,
        "version": TOOL_VERSION,
        "description": "Scaling properties of natural and generated text",
        "endpoints": {
            "/": "API information (this page)",
            "/health": "Health check endpoint",
            "/api/analyze": "Scaling report of a text (POST {text, taylor_l?, lrc_q?, min_freq?, replace_numbers?})",
            "/api/generate": "Simon or Pitman-Yor text (POST {process, length, seed, a?, b?})",
            "/api/shuffle": "n-gram chunk shuffle (POST {text, n, seed})",
        }
    })


@app.route("/health", methods=["GET"])
def health():
    """Health check endpoint"""
    return jsonify({"status": "healthy", "service": TOOL_NAME, "version": TOOL_VERSION}), 200


@app.route("/api/analyze", methods=["POST"])
def analyze():
    """Run the five analyses on posted text"""
    try:
        data = _body()
        stream = tokenize(_text(data))
        min_freq = _int(data, "min_freq", 1)
        if min_freq > 1 or data.get("replace_numbers"):
            stream = preprocess(stream, min_freq, bool(data.get("replace_numbers")))
        defaults = AnalysisConfig.from_env()
        config = replace(defaults, taylor_l=_int(data, "taylor_l", defaults.taylor_l),
                         lrc_q=_int(data, "lrc_q", defaults.lrc_q))
        reference = data.get("reference")
        if reference is not None and not isinstance(reference, dict):
            raise RequestError("'reference' must map property names to exponents")
        report = full_report(stream, config, reference=reference)
        return jsonify({"config": config.to_dict(), "analysis": report.to_dict(stream)}), 200
    except Exception as e:
        return _failure("analyze", e)


@app.route("/api/generate", methods=["POST"])
def generate():
    """Sample text from an urn process"""
    try:
        data = _body()
        process = data.get("process", "simon")
        length = _int(data, "length", 10_000)
        seed = _int(data, "seed", 0)
        if not 1 <= length <= MAX_GENERATE_LENGTH:
            raise RequestError(f"'length' must be in [1, {MAX_GENERATE_LENGTH}]")
        if process == "simon":
            stream = simon_generate(SimonParams(_float(data, "a", 0.1), seed), length)
        elif process == "pitman-yor":
            stream = pitman_yor_generate(PitmanYorParams(_float(data, "a", 0.8), _float(data, "b", 1.0), seed), length)
        else:
            raise RequestError("'process' must be 'simon' or 'pitman-yor'")
        return jsonify({
            "process": process,
            "seed": seed,
            "n_tokens": len(stream),
            "n_types": len(stream.vocab),
            "text": stream.render(),
        }), 200
    except Exception as e:
        return _failure("generate", e)


@app.route("/api/shuffle", methods=["POST"])
def shuffle():
    """Shuffle consecutive n-token chunks of posted text"""
    try:
        data = _body()
        stream = tokenize(_text(data))
        n = _int(data, "n", 1)
        seed = _int(data, "seed", 0)
        shuffled = shuffle_ngram(stream, n, seed)
        return jsonify({"n": n, "seed": seed, "text": shuffled.render()}), 200
    except Exception as e:
        return _failure("shuffle", e)


@app.errorhandler(404)
def not_found(error):
    """Handle 404 errors"""
    return jsonify({
        "error": "Endpoint not found",
        "message": "Please check the API documentation at /"
    }), 404


@app.errorhandler(500)
def internal_error(error):
    """Handle 500 errors"""
    return jsonify({
        "error": "Internal server error",
        "message": str(error)
    }), 500


if __name__ == "__main__":
    port = int(os.getenv("PORT", 8080))
    print(f"Starting {TOOL_NAME} {TOOL_VERSION} on port {port}...")
    app.run(host="0.0.0.0", port=port, debug=False)
