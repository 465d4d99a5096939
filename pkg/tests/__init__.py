"""Tests for the tomography toolkit package."""
