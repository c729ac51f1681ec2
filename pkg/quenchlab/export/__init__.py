"""
Export modules for trajectory CSV and verification reports.
"""

from quenchlab.export.csv_writer import save_csv, write_adjoint_csv, write_trajectory_csv
from quenchlab.export.markdown_generator import generate_markdown

__all__ = ["generate_markdown", "save_csv", "write_adjoint_csv", "write_trajectory_csv"]
