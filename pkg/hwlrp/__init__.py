# This file makes 'hwlrp' a Python package.
