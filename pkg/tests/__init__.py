"""Tests for the SKIPNet package."""
