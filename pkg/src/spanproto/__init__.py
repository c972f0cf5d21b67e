"""Span-based prototypical few-shot named entity recognition."""
