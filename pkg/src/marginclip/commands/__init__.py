"""
Subcommand implementations for the marginclip CLI
"""

from .data_commands import gen_data_command
from .defense_commands import (
    detect_command,
    evaluate_command,
    mitigate_command,
    profile_command,
    roc_command,
)
from .pipeline_command import load_summary, pipeline_command
from .train_commands import adaptive_attack_command, train_command

__all__ = [
    "adaptive_attack_command",
    "detect_command",
    "evaluate_command",
    "gen_data_command",
    "load_summary",
    "mitigate_command",
    "pipeline_command",
    "profile_command",
    "roc_command",
    "train_command",
]
