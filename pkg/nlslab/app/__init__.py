"""HTTP surface over the classifier and the ground-state table."""

from .api import app, create_app

__all__ = ["app", "create_app"]
