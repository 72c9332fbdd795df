"""Test package for the I-KDR toolkit."""
