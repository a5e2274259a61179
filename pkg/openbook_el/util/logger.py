"""
Logging utilities with color support for openbook_el.

Diagnostics go to stderr so that reports printed on stdout stay
machine-readable.
"""
import sys
from enum import Enum


class Color(Enum):
    """Color codes for terminal output"""
    RED = '\033[31m'
    GREEN = '\033[32m'
    YELLOW = '\033[33m'
    CYAN = '\033[36m'
    LIGHT_BLACK = '\033[90m'
    LIGHT_GREEN = '\033[92m'
    LIGHT_BLUE = '\033[94m'

    RESET = '\033[0m'
    BOLD = '\033[1m'


class Logger:
    """
    Logger class with color support for terminal output.
    """

    def __init__(self, enable_colors: bool = True, verbose: bool = False):
        """
        Initialize logger.

        :param enable_colors: Whether to enable color output (auto-detects TTY)
        :param verbose: Whether debug and solver messages are shown
        """
        self.enable_colors = enable_colors and sys.stderr.isatty()
        self.verbose = verbose

    def set_verbose(self, verbose: bool):
        """Turn debug output on or off"""
        self.verbose = verbose

    def print(self, color: Color, message: str, file=None, end: str = '\n'):
        """
        Print a colored message to the terminal.

        :param color: Color to use for the message
        :param message: Message to print
        :param file: File to write to (default: stderr)
        :param end: String appended after the message
        """
        if file is None:
            file = sys.stderr

        if self.enable_colors:
            formatted_message = f"{color.value}{message}{Color.RESET.value}"
        else:
            formatted_message = message

        print(formatted_message, file=file, end=end, flush=True)

    def info(self, message: str, file=None, end: str = '\n'):
        """Print an info message in default color"""
        print(message, file=file or sys.stderr, end=end, flush=True)

    def success(self, message: str, file=None, end: str = '\n'):
        """Print a success message in green"""
        self.print(Color.GREEN, message, file=file, end=end)

    def warning(self, message: str, file=None, end: str = '\n'):
        """Print a warning message in yellow"""
        self.print(Color.YELLOW, message, file=file, end=end)

    def error(self, message: str, file=None, end: str = '\n'):
        """Print an error message in red"""
        self.print(Color.RED, message, file=file, end=end)

    def debug(self, message: str, file=None, end: str = '\n'):
        """Print a debug message in light black (gray), verbose mode only"""
        if self.verbose:
            self.print(Color.LIGHT_BLACK, message, file=file, end=end)

    def solver(self, message: str, file=None, end: str = '\n'):
        """Print a numerical solver message in light blue, verbose mode only"""
        if self.verbose:
            self.print(Color.LIGHT_BLUE, message, file=file, end=end)

    def experiment(self, message: str, file=None, end: str = '\n'):
        """Print a Monte Carlo progress message in light green"""
        self.print(Color.LIGHT_GREEN, message, file=file, end=end)


# Global logger instance
logger = Logger()
