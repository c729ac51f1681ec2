"""
Core numerical modules for Quench Lab. Submodules are imported directly.
"""
