"""Test package for the MMN toolkit."""
