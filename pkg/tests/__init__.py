"""Tests for the gpi_morl toolkit and the morl command line."""
