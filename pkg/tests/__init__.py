"""
Tests package for Knowledge Management application.
"""
