"""Packaged run configurations and the calibrated technology preset."""
