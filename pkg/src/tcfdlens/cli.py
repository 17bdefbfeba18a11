"""Command line interface: ingest, analyze, ask, evaluate, report, serve.

Without an API key configured, all model calls go to the deterministic
offline mock, so every command works on an air-gapped machine.

Exit codes: 0 success, 2 usage error, 3 not found, 4 backend failure,
5 corrupt storage, 1 any other error.
"""

from __future__ import annotations

import functools
import json
import sys
from decimal import ROUND_DOWN, Decimal
from pathlib import Path

import click

from .analysis import AnalysisDeps, analyze_report, answer_custom
from .config import AppConfig
from .errors import (
    AnalysisFailed,
    BackendTimeout,
    BackendUnavailable,
    CorruptIndex,
    CorruptRecord,
    NotFound,
    RateLimited,
    TcfdLensError,
)
from .gateway import ScriptedLlmBackend, default_mock_responder
from .ingestion import chunk_document, chunks_to_jsonl, load_document
from .prompts import CATEGORY_BY_INDEX
from .reporting import write_report
from .storage import Workspace
from .traceability import evaluation_run, load_annotations_jsonl, load_answers_jsonl
from .vectorstore import build_index

_EXIT_CODES = (
    (NotFound, 3),
    ((BackendUnavailable, BackendTimeout, RateLimited, AnalysisFailed), 4),
    ((CorruptIndex, CorruptRecord), 5),
)


def _exit_code_for(exc: TcfdLensError) -> int:
    for classes, code in _EXIT_CODES:
        if isinstance(exc, classes):
            return code
    return 1


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except TcfdLensError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(_exit_code_for(exc))

    return wrapper


def truncate_pct(value: float) -> str:
    """Two decimals, truncated toward zero (75.0 -> '75.00')."""
    return str(Decimal(str(value)).quantize(Decimal("0.01"), rounding=ROUND_DOWN))


@click.group()
@click.option("--workspace", "workspace_path", default=None, help="Workspace directory (default from config/env).")
@click.option("--config", "config_file", default=None, type=click.Path(exists=True), help="JSON config file.")
@click.pass_context
def main(ctx, workspace_path, config_file):
    """Analyze corporate climate disclosures against the eleven TCFD points."""
    config = AppConfig.load(config_file)
    if workspace_path:
        config.workspace = workspace_path
    ctx.obj = config


def _deps_from(config: AppConfig, mock_script: str | None, workspace: Workspace, workers: int | None) -> AnalysisDeps:
    if mock_script:
        llm = ScriptedLlmBackend.from_file(mock_script, default=default_mock_responder)
    else:
        llm = config.make_llm_backend()
    return AnalysisDeps(
        llm=llm,
        embedder=config.make_embedder(),
        guidelines=workspace.guidelines.load(),
        answer_length=config.answer_length,
        k=config.top_k,
        budget_tokens=config.budget_tokens,
        max_workers=workers if workers is not None else config.max_workers,
    )


@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", default="plain_text",
              type=click.Choice(["plain_text", "page_delimited_text", "pdf"]), show_default=True)
@click.option("--title", default="", help="Optional report title stored as metadata.")
@click.option("--chunks-out", default=None, type=click.Path(), help="Also dump chunks as JSON lines.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.pass_obj
@handle_errors
def ingest(config, file, fmt, title, chunks_out, as_json):
    """Load a report, chunk it, build its vector index, store everything."""
    workspace = Workspace(config.workspace)
    raw = Path(file).read_bytes()
    metadata = {"title": title} if title else {}
    doc = load_document(raw, fmt=fmt, metadata=metadata)
    workspace.put_document(doc)
    chunks = chunk_document(doc, config.chunk_size, config.chunk_overlap)
    index = build_index(doc.doc_id, chunks, config.make_embedder())
    workspace.put_index(index)
    if chunks_out:
        Path(chunks_out).write_text(chunks_to_jsonl(chunks), "utf-8")
    if as_json:
        click.echo(json.dumps(
            {"doc_id": doc.doc_id, "pages": len(doc.pages), "chunks": len(chunks)}, sort_keys=True))
    else:
        click.echo(f"Ingested {doc.doc_id}: {len(doc.pages)} pages, {len(chunks)} chunks")


@main.command()
@click.argument("doc_id")
@click.option("--mock-script", default=None, type=click.Path(exists=True),
              help="Canned model responses keyed by prompt fingerprint.")
@click.option("--out", default=None, type=click.Path(), help="Write the full analysis JSON here.")
@click.option("--report-dir", default=None, type=click.Path(), help="Write scores.csv and scores.png here.")
@click.option("--workers", default=None, type=int, help="Questions to run in parallel.")
@click.option("--json", "as_json", is_flag=True, help="Print the full analysis JSON.")
@click.pass_obj
@handle_errors
def analyze(config, doc_id, mock_script, out, report_dir, workers, as_json):
    """Run the eleven-question review over an ingested report."""
    workspace = Workspace(config.workspace)
    index = workspace.get_index(doc_id)
    deps = _deps_from(config, mock_script, workspace, workers)
    analysis = analyze_report(index, deps)
    workspace.put_analysis(analysis)

    if out:
        Path(out).write_text(analysis.to_json(), "utf-8")
    if report_dir:
        write_report(analysis, report_dir)

    if as_json:
        click.echo(analysis.to_json())
        return

    info = analysis.basic_info
    click.echo(f"Company: {info.company_name} ({info.location}, {info.sector})")
    click.echo(f"Status: {analysis.status}")
    click.echo("Question  Category             Score")
    for i in sorted(analysis.conformity):
        category = CATEGORY_BY_INDEX[i]
        click.echo(f"{i:<9} {category:<20} {analysis.conformity[i].score}")
    for record in analysis.errors:
        click.echo(f"error (q{record['question_index']}, {record['stage']}): {record['message']}", err=True)
    if analysis.average_score is not None:
        click.echo(f"Average: {analysis.average_score:.2f}")


@main.command()
@click.argument("doc_id")
@click.argument("question", required=False, default="")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.pass_obj
@handle_errors
def ask(config, doc_id, question, as_json):
    """Ask a free-form question about an ingested report."""
    if not question.strip():
        raise click.UsageError("question must not be empty")
    workspace = Workspace(config.workspace)
    index = workspace.get_index(doc_id)
    info = None
    try:
        info = workspace.latest_analysis(doc_id).basic_info
    except NotFound:
        pass
    deps = _deps_from(config, None, workspace, None)
    answer = answer_custom(index, question, deps, info=info)
    if as_json:
        click.echo(json.dumps(answer.to_json_obj(), ensure_ascii=False, sort_keys=True))
        return
    click.echo(answer.answer_text)
    click.echo(f"Sources: {list(answer.cited_sources)}")
    click.echo(f"Pages: {list(answer.pages or [])}")


@main.command()
@click.argument("answers_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("annotations_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@handle_errors
def evaluate(answers_file, annotations_file, as_json):
    """Score an annotated answer corpus: hallucination rates, ROUGE, kappa."""
    answers = load_answers_jsonl(Path(answers_file).read_text("utf-8"))
    annotations = load_annotations_jsonl(Path(annotations_file).read_text("utf-8"))
    summary = evaluation_run(answers, annotations)
    if as_json:
        click.echo(json.dumps(summary.to_json_obj(), sort_keys=True))
        return
    click.echo(f"Answers: {summary.n_total}")
    click.echo(f"Content: {truncate_pct(summary.content_free_rate)}% "
               f"Source: {truncate_pct(summary.source_free_rate_given_content)}%")
    click.echo(f"ROUGE-1: {summary.rouge1_p:.2f}% ROUGE-2: {summary.rouge2_p:.2f}% "
               f"ROUGE-L: {summary.rougeL_p:.2f}%")
    click.echo(f"Kappa (content): {summary.kappa_content:.2f}")


@main.command()
@click.argument("doc_id")
@click.option("--out-dir", default="report", type=click.Path(), show_default=True)
@click.pass_obj
@handle_errors
def report(config, doc_id, out_dir):
    """Render the latest stored analysis to scores.csv and scores.png."""
    workspace = Workspace(config.workspace)
    analysis = workspace.latest_analysis(doc_id)
    csv_path, png_path = write_report(analysis, out_dir)
    click.echo(f"Wrote {csv_path} and {png_path}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.pass_obj
@handle_errors
def serve(config, host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    if config.using_mock():
        click.echo("No model API key configured; serving with the deterministic mock backend.", err=True)
    uvicorn.run(create_app(config), host=host, port=port)


if __name__ == "__main__":  # pragma: no cover
    main()
