"""
Tests package for the FSMF toolkit.
"""
