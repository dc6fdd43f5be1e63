#!/usr/bin/env python3
"""
Console Output Formatter for the robust MDP toolkit
Section headers and key/value rows for command summaries
"""

import sys


class OutputFormatter:
    """Handles all formatted console output for rmdp_toolkit"""

    # Color codes for terminal output
    COLORS = {
        'reset': '\033[0m',
        'bold': '\033[1m',
        'cyan': '\033[96m',
        'gray': '\033[90m'
    }

    ICONS = {
        'chart': '📊',
        'target': '🎯',
        'file': '📄'
    }

    @staticmethod
    def enabled():
        """Colors only when stdout is a terminal"""
        return sys.stdout.isatty()

    @staticmethod
    def color(text, color_name):
        """Apply color to text"""
        if not OutputFormatter.enabled():
            return str(text)
        color_code = OutputFormatter.COLORS.get(color_name, '')
        reset = OutputFormatter.COLORS['reset']
        return f"{color_code}{text}{reset}"

    @staticmethod
    def bold(text):
        return OutputFormatter.color(text, 'bold')

    @staticmethod
    def section_header(title, icon='chart', width=60):
        icon_char = OutputFormatter.ICONS.get(icon, '•')
        line = "=" * width
        print(f"\n{line}")
        print(f"{icon_char}  {OutputFormatter.bold(title)}")
        print(line)

    @staticmethod
    def key_value(key, value, color=None):
        """Display a key-value pair; floats keep full precision"""
        value_str = f"{value:.12g}" if isinstance(value, float) else str(value)
        if color:
            value_str = OutputFormatter.color(value_str, color)
        print(f"  {OutputFormatter.bold(key)}: {value_str}")

    @staticmethod
    def format_report(report, artifact=None):
        """Summary of a ReportDocument (solve or eval)"""
        OutputFormatter.section_header(report.kind.upper(), icon='target')
        OutputFormatter.key_value("Value", report.value, color='cyan')
        if report.worst_kernel_index is not None:
            OutputFormatter.key_value("Worst kernel", report.worst_kernel_index)
        if report.per_kernel_values:
            OutputFormatter.key_value("Per-kernel values", ", ".join(f"{v:.10g}" for v in report.per_kernel_values))
        for key in sorted(report.details):
            OutputFormatter.key_value(key, report.details[key])
        if artifact:
            OutputFormatter.key_value("Written", artifact, color='gray')
