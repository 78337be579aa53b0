"""Sentence-encoder service for the /encode wire protocol."""

from .service import DEFAULT_MODEL, MAX_BATCH, MAX_TEXT_CHARS, Encoder, make_server, serve_in_thread

__all__ = ["DEFAULT_MODEL", "MAX_BATCH", "MAX_TEXT_CHARS", "Encoder", "make_server", "serve_in_thread"]
