"""``python -m liquiform`` forwards to the CLI."""

from .cli import entry

entry()
