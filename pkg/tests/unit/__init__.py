"""Unit tests for IEPG."""
