"""Bundled handler-language application profiles."""
