"""Dynamic risk assessment for skill-based robot manipulators.

Stages: trajectory logs -> skill detection -> behavioral profile ->
hybrid risk model (fault trees + absorbing DTMC) -> risk report.
"""

__version__ = "0.1.0"
