"""Tests for deep_envelope."""
