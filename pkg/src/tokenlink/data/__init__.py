"""Bundled fixtures, codebook and test images."""
