"""Multi-step coarse-to-fine question answering.

An actor-critic controller reads a (document, question) state each step and
either answers with a span extractor, narrows the document to its most
question-like sentences, or excises a suspected false-positive answer and
tries again. Everything runs on a small reverse-mode autodiff tensor core.
"""

__version__ = "0.1.0"
