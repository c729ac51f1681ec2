"""
Markdown Report Generator
=========================
Generates a Markdown verification report from suite results.
"""

from typing import List

from quenchlab.models.quench_models import (
    CertificateReport,
    SuiteResult,
    VerificationResults,
)


def generate_markdown(results: VerificationResults) -> str:
    """
    Generate a Markdown report from verification results.

    Args:
        results: Results of a verify run

    Returns:
        Markdown formatted string
    """
    sections = []

    # Title
    sections.append("# Quench Verification Report")
    sections.append(f"\n*Generated: {results.created_at.strftime('%Y-%m-%d %H:%M')}*\n")

    # Table of Contents
    sections.append("## Table of Contents\n")
    sections.append("1. [Summary](#summary)")
    for i, suite in enumerate(results.suites, 2):
        anchor = suite.name.lower().replace(" ", "-")
        sections.append(f"{i}. [{suite.name}](#{anchor})")
    sections.append("")

    sections.append(generate_summary_section(results))

    for suite in results.suites:
        sections.append(generate_suite_section(suite))

    return "\n".join(sections)


def generate_summary_section(results: VerificationResults) -> str:
    """Generate the summary table."""
    lines = ["## Summary\n"]

    verdict = "PASSED" if results.passed else "FAILED"
    lines.append(f"**Verdict:** {verdict}\n")
    lines.append(f"**Seed:** {results.seed}\n")
    lines.append(f"**Certificates:** {results.total_reports}\n")

    if not results.suites:
        lines.append("*No suites were run.*\n")
        return "\n".join(lines)

    lines.append("| Suite | Certificates | Failures | Time (s) |")
    lines.append("|-------|--------------|----------|----------|")
    for suite in results.suites:
        lines.append(
            f"| {suite.name} | {len(suite.reports)} | "
            f"{len(suite.failures)} | {suite.elapsed_seconds:.2f} |"
        )
    lines.append("")

    return "\n".join(lines)


def _report_rows(reports: List[CertificateReport]) -> List[str]:
    rows = [
        "| Certificate | Result | Worst t | Margin | Detail |",
        "|-------------|--------|---------|--------|--------|",
    ]
    for r in reports:
        result = "pass" if r.passed else "**FAIL**"
        rows.append(
            f"| {r.name} | {result} | {r.worst_t:.6g} | {r.worst_margin:.3g} | {r.detail} |"
        )
    return rows


def generate_suite_section(suite: SuiteResult) -> str:
    """Generate one suite section; failures first, then a pass count."""
    lines = [f"## {suite.name}\n"]
    lines.append(f"*{suite.description}*\n")

    if not suite.reports:
        lines.append("*No certificates produced.*\n")
        return "\n".join(lines)

    failures = suite.failures
    if failures:
        lines.append("### Failures\n")
        lines.extend(_report_rows(failures))
        lines.append("")

    passed = len(suite.reports) - len(failures)
    lines.append(f"**Passed:** {passed}/{len(suite.reports)}\n")

    # Small suites are listed in full.
    if len(suite.reports) <= 40:
        lines.extend(_report_rows(suite.reports))
        lines.append("")

    return "\n".join(lines)
