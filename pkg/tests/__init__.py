"""
Unit tests for the laplacian_solver modules
"""
