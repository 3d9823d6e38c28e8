"""Tests for Incident Autopilot."""
